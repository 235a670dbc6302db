#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flgcn/errors.hpp"
#include "flgcn/rng.hpp"

namespace flgcn {

enum class Split { meta_train, meta_test };
enum class Setting { cold, warm };

std::string to_string(Split s);
std::string to_string(Setting s);
Split parse_split(const std::string& s);
Setting parse_setting(const std::string& s);

/// Immutable store of per-instance feature vectors with class labels.
/// Instance ids are the row indices. Features are kept as float32, the unit
/// the file formats use; math upcasts to double at the point of use.
class FeaturePool {
public:
    FeaturePool(int dim, Split split, std::vector<int> labels, std::vector<float> features);

    int dim() const { return dim_; }
    Split split() const { return split_; }
    int size() const { return static_cast<int>(labels_.size()); }

    const std::vector<int>& class_ids() const { return class_ids_; } // sorted, distinct
    int label(int id) const { return labels_[id]; }
    std::span<const float> feature(int id) const {
        return {features_.data() + static_cast<std::size_t>(id) * dim_, static_cast<std::size_t>(dim_)};
    }
    std::vector<double> feature_as_double(int id) const;
    const std::vector<int>& instances_of(int class_id) const;

    const std::vector<int>& labels() const { return labels_; }
    const std::vector<float>& raw_features() const { return features_; }

private:
    int dim_;
    Split split_;
    std::vector<int> labels_;
    std::vector<float> features_;
    std::vector<int> class_ids_;
    std::map<int, std::vector<int>> by_class_;
};

struct SyntheticSpec {
    int n_classes = 0;
    int per_class = 0;
    int dim = 0;
    double spread = 0.0;      // intra-class stddev before renormalization
    std::uint64_t seed = 0;
    Split split = Split::meta_test;
    // Base value for generated class ids; -1 picks a split-dependent default
    // (0 for meta-train, 1000000 for meta-test) so pools generated for the two
    // splits never share a class id.
    long long class_id_base = -1;
};

/// Gaussian clusters on the unit sphere: one uniformly random unit mean per
/// class, instances are mean + N(0, spread^2 I), L2-normalized back to the
/// sphere. Deterministic in spec.seed.
FeaturePool generate_synthetic(const SyntheticSpec& spec);

/// Directory format: meta.json + features.bin (float32 LE, row-major) +
/// labels.txt. A path ending in ".csv" selects the single-file CSV format
/// (header "class,f0,...,f{dim-1}"); CSV carries no split tag, so the caller
/// supplies the split for that case.
FeaturePool load_pool(const std::string& path, Split csv_split = Split::meta_test);
void save_pool(const FeaturePool& pool, const std::string& dir);
void save_pool_csv(const FeaturePool& pool, const std::string& path);

/// One sampled task with mutable selection state. The true classes of
/// unlabeled instances are only reachable through reveal() and oracle_label();
/// selection policies must not touch the latter (the expert does).
class Episode {
public:
    static Episode manual(const FeaturePool& pool, std::vector<int> label_set,
                          std::vector<std::pair<int, int>> labeled, std::vector<int> unlabeled,
                          std::vector<std::pair<int, int>> eval_set, int budget, Setting setting);

    int ways() const { return static_cast<int>(label_set_.size()); }
    int budget() const { return budget_; }
    int queries() const { return queries_; }
    Setting setting() const { return setting_; }
    const std::vector<int>& label_set() const { return label_set_; }
    const std::vector<std::pair<int, int>>& labeled() const { return labeled_; }
    const std::vector<int>& unlabeled_ids() const { return unlabeled_; }
    const std::vector<std::pair<int, int>>& eval_set() const { return eval_set_; }

    int dim() const;
    std::span<const float> feature(int id) const;
    std::vector<double> feature_as_double(int id) const;

    /// True class of an unlabeled instance. Oracle/query path only.
    int oracle_label(int id) const;

    /// Moves `id` from the unlabeled pool to the labeled set with its true
    /// class and counts one query against the budget.
    void reveal(int id);

private:
    Episode() = default;
    friend Episode sample_episode(const FeaturePool&, int, int, Setting, Rng&, int, int);

    const FeaturePool* pool_ = nullptr;
    std::vector<int> label_set_;
    std::vector<std::pair<int, int>> labeled_;
    std::vector<int> unlabeled_;
    std::vector<std::pair<int, int>> eval_set_;
    int budget_ = 0;
    int queries_ = 0;
    Setting setting_ = Setting::cold;
};

/// N-way sampling per the episode protocol: per class, `unlabeled_per_class`
/// instances into the candidate pool and `eval_per_class` into the evaluation
/// set (disjoint); warm setting labels one extra instance per class up front.
/// Budget is ways*shots queries. Deterministic in the rng state.
Episode sample_episode(const FeaturePool& pool, int ways, int shots, Setting setting, Rng& rng,
                       int unlabeled_per_class = 10, int eval_per_class = 10);

} // namespace flgcn

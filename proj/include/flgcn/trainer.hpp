#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flgcn/dataset.hpp"
#include "flgcn/policy.hpp"

namespace flgcn {

enum class LossMode { margin_rank, mse };

std::string to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);

struct TrainConfig {
    int iterations = 2000;
    int batch_tasks = 16;
    double learning_rate = 3e-4;
    double weight_decay = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    LossMode loss_mode = LossMode::margin_rank;
    bool decoupled_weight_decay = true; // false = classic L2 added to the gradient
    std::uint64_t seed = 0;
    int shots = 1;
    int unlabeled_per_class = 10;
    int eval_per_class = 10;
    int threads = 0; // 0 = hardware concurrency
    int save_every = 0;
    std::string save_path;

    void validate() const;
};

/// One training step's alignment of policy scores with expert accuracies.
struct StepSupervision {
    std::vector<int> candidate_ids;
    Vec expert_acc;
    Vec scores;
    int valid_pairs = 0;
};

struct LossResult {
    double loss = 0.0;
    Vec dscores;
    int valid_pairs = 0;
};

/// Pairwise hinge on score order vs expert-accuracy order, averaged over the
/// pairs with distinct expert accuracies (tied pairs carry no ordering
/// information and are excluded). Subgradient at the hinge kink is the zero
/// branch.
LossResult margin_rank_loss(const Vec& expert_acc, const Vec& scores);

/// Regression of each score onto the expert's accuracy gain over the current
/// classifier (current_acc = 0 while the classifier is undefined).
LossResult mse_loss(const Vec& expert_acc, const Vec& scores, double current_acc);

/// Exact reverse-mode gradients of sum_j dscores[j] * score_j with respect to
/// every parameter block, consuming the forward trace. Includes the paths
/// through the affinities and the degree normalizations.
PolicyParams backward(const ForwardTrace& trace, const PolicyParams& params, const Vec& dscores);

/// Adam with bias correction. Weight decay is decoupled by default: params
/// shrink by (1 - lr*wd) before the Adam delta is applied.
class AdamOptimizer {
public:
    AdamOptimizer(const PolicyConfig& policy_config, const TrainConfig& config);
    void step(PolicyParams& params, const PolicyParams& grads);
    int steps_taken() const { return t_; }

private:
    TrainConfig cfg_;
    PolicyParams m_, v_;
    int t_ = 0;
};

struct TrainLogRow {
    int iteration;
    double mean_loss;
    double mean_eval_acc;
};

struct TrainResult {
    PolicyParams params;
    std::vector<TrainLogRow> log;
};

/// Imitation learning: per iteration, sample batch_tasks episodes, roll each
/// out for its full budget with the policy's own argmax picks, supervise every
/// step against the expert ranking, average gradients over (batch, steps) and
/// take one Adam step. Log rows stream to `log_stream` as CSV when given.
TrainResult meta_train(const FeaturePool& pool, const PolicyConfig& policy_config, const TrainConfig& config,
                       std::ostream* log_stream = nullptr);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<std::pair<std::string, double>> per_block; // block name -> max rel error
};

/// Central-difference check (step 1e-5) of backward() on a tiny fixed-size
/// problem: 2-way, 2 labeled, 3 unlabeled, d=4, D=6, M=2, run in warm, cold
/// and empty-labeled-cold variants.
GradCheckReport gradcheck_suite(std::uint64_t seed, PhiMode phi_mode = PhiMode::shifted_cosine,
                                bool inter_norm = true);

} // namespace flgcn

#include "flgcn/dataset.hpp"

#include "flgcn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace flgcn {

std::string to_string(Split s) { return s == Split::meta_train ? "meta-train" : "meta-test"; }
std::string to_string(Setting s) { return s == Setting::cold ? "cold" : "warm"; }

Split parse_split(const std::string& s) {
    if (s == "meta-train") return Split::meta_train;
    if (s == "meta-test") return Split::meta_test;
    fail(errc::format, "unknown split '" + s + "'");
}

Setting parse_setting(const std::string& s) {
    if (s == "cold") return Setting::cold;
    if (s == "warm") return Setting::warm;
    fail(errc::format, "unknown setting '" + s + "'");
}

FeaturePool::FeaturePool(int dim, Split split, std::vector<int> labels, std::vector<float> features)
    : dim_(dim), split_(split), labels_(std::move(labels)), features_(std::move(features)) {
    if (dim_ <= 0) fail(errc::invalid_spec, "feature dimension must be positive");
    if (features_.size() != labels_.size() * static_cast<std::size_t>(dim_))
        fail(errc::shape, "feature buffer size does not match n_instances x dim");
    for (std::size_t i = 0; i < features_.size(); ++i)
        if (!std::isfinite(features_[i]))
            fail(errc::data, "non-finite feature value at row " + std::to_string(i / dim_));
    for (int id = 0; id < size(); ++id) by_class_[labels_[id]].push_back(id);
    class_ids_.reserve(by_class_.size());
    for (const auto& [c, _] : by_class_) class_ids_.push_back(c);
}

std::vector<double> FeaturePool::feature_as_double(int id) const {
    auto f = feature(id);
    return std::vector<double>(f.begin(), f.end());
}

const std::vector<int>& FeaturePool::instances_of(int class_id) const {
    auto it = by_class_.find(class_id);
    if (it == by_class_.end()) fail(errc::sampling, "class " + std::to_string(class_id) + " not in pool");
    return it->second;
}

FeaturePool generate_synthetic(const SyntheticSpec& spec) {
    if (spec.dim < 2) fail(errc::invalid_spec, "synthetic dim must be >= 2");
    if (spec.per_class < 1) fail(errc::invalid_spec, "synthetic per_class must be >= 1");
    if (spec.n_classes < 1) fail(errc::invalid_spec, "synthetic n_classes must be >= 1");
    if (spec.spread < 0.0) fail(errc::invalid_spec, "synthetic spread must be >= 0");

    long long base = spec.class_id_base;
    if (base < 0) base = spec.split == Split::meta_train ? 0 : 1000000;

    Rng rng(spec.seed);
    std::vector<int> labels;
    std::vector<float> features;
    labels.reserve(static_cast<std::size_t>(spec.n_classes) * spec.per_class);
    features.reserve(labels.capacity() * spec.dim);

    std::vector<double> mean(spec.dim), v(spec.dim);
    for (int k = 0; k < spec.n_classes; ++k) {
        // Gaussian draw normalized to the sphere is uniform on the sphere.
        double nrm = 0.0;
        do {
            for (auto& x : mean) x = rng.normal();
            nrm = norm2(mean);
        } while (nrm < 1e-12);
        for (auto& x : mean) x /= nrm;

        for (int i = 0; i < spec.per_class; ++i) {
            for (int j = 0; j < spec.dim; ++j) v[j] = mean[j] + spec.spread * rng.normal();
            double n = norm2(v);
            if (n < 1e-12) { v.assign(spec.dim, 0.0); v[0] = 1.0; n = 1.0; }
            labels.push_back(static_cast<int>(base + k));
            for (int j = 0; j < spec.dim; ++j) features.push_back(static_cast<float>(v[j] / n));
        }
    }
    return FeaturePool(spec.dim, spec.split, std::move(labels), std::move(features));
}

// ---------------------------------------------------------------------------
// File formats

static FeaturePool load_pool_csv(const std::string& path, Split split) {
    std::ifstream in(path);
    if (!in) fail(errc::format, "cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) fail(errc::format, path + ": empty file");
    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
    }
    if (cols.empty() || cols[0] != "class") fail(errc::format, path + ": header must start with 'class'");
    const int dim = static_cast<int>(cols.size()) - 1;
    if (dim < 1) fail(errc::format, path + ": no feature columns");
    for (int j = 0; j < dim; ++j)
        if (cols[j + 1] != "f" + std::to_string(j))
            fail(errc::format, path + ": expected column f" + std::to_string(j) + ", got " + cols[j + 1]);

    std::vector<int> labels;
    std::vector<float> features;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        int field = 0;
        while (std::getline(ss, tok, ',')) {
            try {
                if (field == 0) {
                    labels.push_back(std::stoi(tok));
                } else {
                    float v = std::stof(tok);
                    if (!std::isfinite(v)) fail(errc::data, path + ": non-finite value at row " + std::to_string(row));
                    features.push_back(v);
                }
            } catch (const std::invalid_argument&) {
                fail(errc::format, path + ": bad number '" + tok + "' at row " + std::to_string(row));
            } catch (const std::out_of_range&) {
                fail(errc::data, path + ": value out of range at row " + std::to_string(row));
            }
            ++field;
        }
        if (field != dim + 1)
            fail(errc::format, path + ": row " + std::to_string(row) + " has " + std::to_string(field) +
                                   " fields, expected " + std::to_string(dim + 1));
        ++row;
    }
    return FeaturePool(dim, split, std::move(labels), std::move(features));
}

FeaturePool load_pool(const std::string& path, Split csv_split) {
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") return load_pool_csv(path, csv_split);

    const fs::path dir(path);
    const auto meta_path = dir / "meta.json";
    std::ifstream meta_in(meta_path);
    if (!meta_in) fail(errc::format, "cannot open " + meta_path.string());
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
        fail(errc::format, meta_path.string() + ": " + e.what());
    }
    int dim = 0, n = 0;
    Split split = Split::meta_test;
    try {
        dim = meta.at("dim").get<int>();
        n = meta.at("n_instances").get<int>();
        split = parse_split(meta.at("split").get<std::string>());
        (void)meta.at("classes"); // presence check; contents validated below
    } catch (const nlohmann::json::exception& e) {
        fail(errc::format, meta_path.string() + ": " + e.what());
    }
    if (dim <= 0 || n < 0) fail(errc::format, meta_path.string() + ": bad dim/n_instances");

    const auto feat_path = dir / "features.bin";
    std::ifstream feat_in(feat_path, std::ios::binary);
    if (!feat_in) fail(errc::format, "cannot open " + feat_path.string());
    feat_in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(feat_in.tellg());
    const std::size_t expect = sizeof(float) * static_cast<std::size_t>(n) * dim;
    if (bytes != expect)
        fail(errc::format, feat_path.string() + ": has " + std::to_string(bytes) + " bytes, expected " +
                               std::to_string(expect));
    feat_in.seekg(0);
    std::vector<float> features(static_cast<std::size_t>(n) * dim);
    feat_in.read(reinterpret_cast<char*>(features.data()), static_cast<std::streamsize>(expect));
    if (!feat_in) fail(errc::format, feat_path.string() + ": short read");

    const auto label_path = dir / "labels.txt";
    std::ifstream label_in(label_path);
    if (!label_in) fail(errc::format, "cannot open " + label_path.string());
    std::vector<int> labels;
    labels.reserve(n);
    int v = 0;
    while (label_in >> v) labels.push_back(v);
    if (static_cast<int>(labels.size()) != n)
        fail(errc::format, label_path.string() + ": has " + std::to_string(labels.size()) + " labels, expected " +
                               std::to_string(n));

    FeaturePool pool(dim, split, std::move(labels), std::move(features));
    // Cross-check the declared class list.
    std::set<int> declared;
    for (const auto& c : meta["classes"]) declared.insert(c.get<int>());
    for (int c : pool.class_ids())
        if (!declared.count(c))
            fail(errc::format, meta_path.string() + ": class " + std::to_string(c) + " present in labels.txt but not declared");
    return pool;
}

void save_pool(const FeaturePool& pool, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json meta{{"dim", pool.dim()},
                        {"n_instances", pool.size()},
                        {"classes", pool.class_ids()},
                        {"split", to_string(pool.split())}};
    std::ofstream meta_out(fs::path(dir) / "meta.json");
    meta_out << meta.dump(2) << "\n";

    std::ofstream feat_out(fs::path(dir) / "features.bin", std::ios::binary);
    feat_out.write(reinterpret_cast<const char*>(pool.raw_features().data()),
                   static_cast<std::streamsize>(sizeof(float) * pool.raw_features().size()));

    std::ofstream label_out(fs::path(dir) / "labels.txt");
    for (int id = 0; id < pool.size(); ++id) label_out << pool.label(id) << "\n";
}

void save_pool_csv(const FeaturePool& pool, const std::string& path) {
    std::ofstream out(path);
    out << "class";
    for (int j = 0; j < pool.dim(); ++j) out << ",f" << j;
    out << "\n";
    char buf[64];
    for (int id = 0; id < pool.size(); ++id) {
        out << pool.label(id);
        auto f = pool.feature(id);
        for (float v : f) {
            std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(v)); // round-trips float32
            out << buf;
        }
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// Episodes

Episode Episode::manual(const FeaturePool& pool, std::vector<int> label_set,
                        std::vector<std::pair<int, int>> labeled, std::vector<int> unlabeled,
                        std::vector<std::pair<int, int>> eval_set, int budget, Setting setting) {
    std::set<int> seen;
    auto check_fresh = [&](int id) {
        if (!seen.insert(id).second)
            fail(errc::invalid_spec, "instance " + std::to_string(id) + " appears in two episode sets");
    };
    for (const auto& [id, _] : labeled) check_fresh(id);
    for (int id : unlabeled) check_fresh(id);
    for (const auto& [id, _] : eval_set) check_fresh(id);

    Episode ep;
    ep.pool_ = &pool;
    ep.label_set_ = std::move(label_set);
    ep.labeled_ = std::move(labeled);
    ep.unlabeled_ = std::move(unlabeled);
    ep.eval_set_ = std::move(eval_set);
    ep.budget_ = budget;
    ep.setting_ = setting;
    return ep;
}

int Episode::dim() const { return pool_->dim(); }

std::span<const float> Episode::feature(int id) const { return pool_->feature(id); }

std::vector<double> Episode::feature_as_double(int id) const { return pool_->feature_as_double(id); }

int Episode::oracle_label(int id) const { return pool_->label(id); }

void Episode::reveal(int id) {
    if (queries_ >= budget_)
        fail(errc::budget, "budget of " + std::to_string(budget_) + " queries exhausted");
    auto it = std::find(unlabeled_.begin(), unlabeled_.end(), id);
    if (it == unlabeled_.end())
        fail(errc::invalid_selection, "instance " + std::to_string(id) + " is not in the unlabeled set");
    unlabeled_.erase(it);
    labeled_.emplace_back(id, pool_->label(id));
    ++queries_;
}

Episode sample_episode(const FeaturePool& pool, int ways, int shots, Setting setting, Rng& rng,
                       int unlabeled_per_class, int eval_per_class) {
    if (ways < 1 || shots < 1) fail(errc::sampling, "ways and shots must be >= 1");
    const int n_classes = static_cast<int>(pool.class_ids().size());
    if (n_classes < ways)
        fail(errc::sampling, "pool has " + std::to_string(n_classes) + " classes, need " + std::to_string(ways));

    // Partial Fisher-Yates over class indices.
    std::vector<int> idx(n_classes);
    for (int i = 0; i < n_classes; ++i) idx[i] = i;
    Episode ep;
    ep.pool_ = &pool;
    ep.setting_ = setting;
    ep.budget_ = ways * shots;
    for (int i = 0; i < ways; ++i) {
        int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes - i)));
        std::swap(idx[i], idx[j]);
        ep.label_set_.push_back(pool.class_ids()[idx[i]]);
    }

    const int need = unlabeled_per_class + eval_per_class + (setting == Setting::warm ? 1 : 0);
    for (int c : ep.label_set_) {
        std::vector<int> ids = pool.instances_of(c);
        if (static_cast<int>(ids.size()) < need)
            fail(errc::sampling, "class " + std::to_string(c) + " has " + std::to_string(ids.size()) +
                                     " instances, episode needs " + std::to_string(need));
        // Partial shuffle: the first `need` entries are a uniform sample.
        for (int i = 0; i < need; ++i) {
            int j = i + static_cast<int>(rng.below(ids.size() - i));
            std::swap(ids[i], ids[j]);
        }
        int at = 0;
        if (setting == Setting::warm) ep.labeled_.emplace_back(ids[at++], c);
        for (int i = 0; i < unlabeled_per_class; ++i) ep.unlabeled_.push_back(ids[at++]);
        for (int i = 0; i < eval_per_class; ++i) ep.eval_set_.emplace_back(ids[at++], c);
    }
    return ep;
}

} // namespace flgcn

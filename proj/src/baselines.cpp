#include "flgcn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace flgcn {

std::string to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::random: return "random";
        case PolicyKind::entropy: return "entropy";
        case PolicyKind::minmaxcos: return "minmaxcos";
        case PolicyKind::kcenter: return "kcenter";
        case PolicyKind::expert: return "expert";
        case PolicyKind::flgcn: return "flgcn";
    }
    return "?";
}

PolicyKind parse_policy(const std::string& name) {
    for (PolicyKind k : {PolicyKind::random, PolicyKind::entropy, PolicyKind::minmaxcos, PolicyKind::kcenter,
                         PolicyKind::expert, PolicyKind::flgcn})
        if (to_string(k) == name) return k;
    fail(errc::format, "unknown policy '" + name + "'");
}

int argmax_selection(const std::vector<int>& ids, const Vec& scores) {
    if (ids.empty()) fail(errc::no_candidates, "no candidates to select from");
    if (ids.size() != scores.size()) fail(errc::shape, "scores not aligned to candidates");
    int best = 0;
    for (int i = 1; i < static_cast<int>(ids.size()); ++i) {
        if (scores[i] > scores[best] || (scores[i] == scores[best] && ids[i] < ids[best])) best = i;
    }
    return ids[best];
}

static const std::vector<int>& candidates_or_fail(const Episode& episode) {
    const auto& u = episode.unlabeled_ids();
    if (u.empty()) fail(errc::no_candidates, "unlabeled set is empty");
    return u;
}

int select_random(const Episode& episode, Rng& rng) {
    const auto& u = candidates_or_fail(episode);
    return u[rng.below(u.size())];
}

int select_entropy(const Episode& episode) {
    const auto& u = candidates_or_fail(episode);
    PrototypeSet protos = episode_prototypes(episode);
    if (protos.empty())
        fail(errc::unsupported, "entropy selection is undefined with an empty labeled set (cold start)");
    Vec entropies(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        Vec p = predict_proba(episode.feature_as_double(u[i]), protos);
        double h = 0.0;
        for (double q : p)
            if (q > 0.0) h -= q * std::log(q);
        entropies[i] = h;
    }
    return argmax_selection(u, entropies);
}

static double cosine(std::span<const float> a, std::span<const float> b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        ab += double(a[j]) * b[j];
        aa += double(a[j]) * a[j];
        bb += double(b[j]) * b[j];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

int select_minmaxcos(const Episode& episode, Rng& rng) {
    const auto& u = candidates_or_fail(episode);
    if (episode.labeled().empty()) return u[rng.below(u.size())]; // cold-start bootstrap
    Vec neg_maxcos(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        double m = -2.0;
        for (const auto& [lid, _] : episode.labeled())
            m = std::max(m, cosine(episode.feature(u[i]), episode.feature(lid)));
        neg_maxcos[i] = -m; // argmin of max-cos
    }
    return argmax_selection(u, neg_maxcos);
}

int select_kcenter(const Episode& episode, Rng& rng) {
    const auto& u = candidates_or_fail(episode);
    if (episode.labeled().empty()) return u[rng.below(u.size())]; // cold-start bootstrap
    Vec dist_to_nearest(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        auto z = episode.feature(u[i]);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [lid, _] : episode.labeled()) {
            auto c = episode.feature(lid);
            double s = 0.0;
            for (std::size_t j = 0; j < z.size(); ++j) {
                double d = double(z[j]) - c[j];
                s += d * d;
            }
            best = std::min(best, s);
        }
        dist_to_nearest[i] = std::sqrt(best);
    }
    return argmax_selection(u, dist_to_nearest);
}

Vec expert_scores(const Episode& episode) {
    const auto& u = candidates_or_fail(episode);
    if (episode.eval_set().empty()) fail(errc::data, "expert_scores: empty evaluation set");

    // Per-class running sums let each candidate's prototype set be assembled
    // with one incremental mean update instead of a full rebuild.
    const int dim = episode.dim();
    std::map<int, std::pair<Vec, int>> sums;
    for (const auto& [id, cls] : episode.labeled()) {
        auto& [sum, count] = sums.try_emplace(cls, Vec(dim, 0.0), 0).first->second;
        auto f = episode.feature(id);
        for (int j = 0; j < dim; ++j) sum[j] += f[j];
        ++count;
    }

    std::vector<LabeledVec> eval_set;
    eval_set.reserve(episode.eval_set().size());
    for (const auto& [id, cls] : episode.eval_set()) eval_set.emplace_back(episode.feature_as_double(id), cls);

    Vec scores(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        const int cls = episode.oracle_label(u[i]);
        auto f = episode.feature(u[i]);

        auto augmented = sums;
        auto& [sum, count] = augmented.try_emplace(cls, Vec(dim, 0.0), 0).first->second;
        for (int j = 0; j < dim; ++j) sum[j] += f[j];
        ++count;

        PrototypeSet protos;
        protos.centers = Matrix(static_cast<int>(augmented.size()), dim);
        int row = 0;
        for (const auto& [c, entry] : augmented) {
            protos.class_ids.push_back(c);
            auto center = protos.centers.row(row++);
            for (int j = 0; j < dim; ++j) center[j] = entry.first[j] / entry.second;
        }
        scores[i] = evaluate_accuracy(eval_set, protos);
    }
    return scores;
}

int select_expert(const Episode& episode) {
    return argmax_selection(episode.unlabeled_ids(), expert_scores(episode));
}

namespace {

class RandomPolicy final : public SelectionPolicy {
public:
    int select(const Episode& ep, Rng& rng) override { return select_random(ep, rng); }
    PolicyKind kind() const override { return PolicyKind::random; }
};

class EntropyPolicy final : public SelectionPolicy {
public:
    int select(const Episode& ep, Rng&) override { return select_entropy(ep); }
    PolicyKind kind() const override { return PolicyKind::entropy; }
};

class MinMaxCosPolicy final : public SelectionPolicy {
public:
    int select(const Episode& ep, Rng& rng) override { return select_minmaxcos(ep, rng); }
    PolicyKind kind() const override { return PolicyKind::minmaxcos; }
};

class KCenterPolicy final : public SelectionPolicy {
public:
    int select(const Episode& ep, Rng& rng) override { return select_kcenter(ep, rng); }
    PolicyKind kind() const override { return PolicyKind::kcenter; }
};

class ExpertPolicy final : public SelectionPolicy {
public:
    int select(const Episode& ep, Rng&) override { return select_expert(ep); }
    PolicyKind kind() const override { return PolicyKind::expert; }
};

class FlgcnPolicy final : public SelectionPolicy {
public:
    explicit FlgcnPolicy(const PolicyParams* params) : params_(params) {
        if (!params_) fail(errc::config, "flgcn policy needs a checkpoint");
    }
    int select(const Episode& ep, Rng&) override {
        return argmax_selection(ep.unlabeled_ids(), forward_scores(ep, *params_));
    }
    PolicyKind kind() const override { return PolicyKind::flgcn; }

private:
    const PolicyParams* params_;
};

} // namespace

std::unique_ptr<SelectionPolicy> make_policy(PolicyKind kind, const PolicyParams* params) {
    switch (kind) {
        case PolicyKind::random: return std::make_unique<RandomPolicy>();
        case PolicyKind::entropy: return std::make_unique<EntropyPolicy>();
        case PolicyKind::minmaxcos: return std::make_unique<MinMaxCosPolicy>();
        case PolicyKind::kcenter: return std::make_unique<KCenterPolicy>();
        case PolicyKind::expert: return std::make_unique<ExpertPolicy>();
        case PolicyKind::flgcn: return std::make_unique<FlgcnPolicy>(params);
    }
    fail(errc::config, "unknown policy kind");
}

} // namespace flgcn

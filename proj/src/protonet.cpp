#include "flgcn/protonet.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace flgcn {

PrototypeSet compute_prototypes(const std::vector<LabeledVec>& labeled) {
    PrototypeSet out;
    if (labeled.empty()) return out;

    const int dim = static_cast<int>(labeled.front().first.size());
    std::map<int, std::pair<Vec, int>> sums; // class -> (sum, count)
    for (const auto& [vec, cls] : labeled) {
        if (static_cast<int>(vec.size()) != dim) fail(errc::shape, "labeled vectors differ in dimension");
        auto& [sum, count] = sums.try_emplace(cls, Vec(dim, 0.0), 0).first->second;
        for (int j = 0; j < dim; ++j) sum[j] += vec[j];
        ++count;
    }
    out.class_ids.reserve(sums.size());
    out.centers = Matrix(static_cast<int>(sums.size()), dim);
    int row = 0;
    for (auto& [cls, entry] : sums) {
        out.class_ids.push_back(cls);
        auto& [sum, count] = entry;
        auto center = out.centers.row(row++);
        for (int j = 0; j < dim; ++j) center[j] = sum[j] / count;
    }
    return out;
}

PrototypeSet episode_prototypes(const Episode& episode) {
    std::vector<LabeledVec> labeled;
    labeled.reserve(episode.labeled().size());
    for (const auto& [id, cls] : episode.labeled()) labeled.emplace_back(episode.feature_as_double(id), cls);
    return compute_prototypes(labeled);
}

static double proto_distance(std::span<const double> z, std::span<const double> mu, Distance distance) {
    double s = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        double d = z[j] - mu[j];
        s += d * d;
    }
    return distance == Distance::squared_euclidean ? s : std::sqrt(s);
}

Vec predict_proba(std::span<const double> z, const PrototypeSet& protos, Distance distance) {
    if (protos.empty()) fail(errc::undefined_classifier, "predict_proba with no prototypes");
    if (static_cast<int>(z.size()) != protos.dim()) fail(errc::shape, "query dimension does not match prototypes");

    Vec logits(protos.size());
    for (int k = 0; k < protos.size(); ++k) logits[k] = -proto_distance(z, protos.centers.row(k), distance);
    const double m = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& l : logits) {
        l = std::exp(l - m);
        total += l;
    }
    for (double& l : logits) l /= total;
    return logits;
}

static int predict_class(std::span<const double> z, const PrototypeSet& protos, Distance distance) {
    Vec p = predict_proba(z, protos, distance);
    int best = 0;
    for (int k = 1; k < protos.size(); ++k)
        if (p[k] > p[best]) best = k; // ties keep the earlier (lower) class id
    return protos.class_ids[best];
}

double evaluate_accuracy(const std::vector<LabeledVec>& eval_set, const PrototypeSet& protos, Distance distance) {
    if (protos.empty()) fail(errc::undefined_classifier, "evaluate_accuracy with no prototypes");
    if (eval_set.empty()) fail(errc::data, "evaluate_accuracy with empty eval set");
    int hits = 0;
    for (const auto& [vec, cls] : eval_set)
        if (predict_class(vec, protos, distance) == cls) ++hits;
    return static_cast<double>(hits) / static_cast<double>(eval_set.size());
}

double evaluate_accuracy(const Episode& episode, const PrototypeSet& protos, Distance distance) {
    if (protos.empty()) fail(errc::undefined_classifier, "evaluate_accuracy with no prototypes");
    if (episode.eval_set().empty()) fail(errc::data, "evaluate_accuracy with empty eval set");
    int hits = 0;
    Vec z;
    for (const auto& [id, cls] : episode.eval_set()) {
        auto f = episode.feature(id);
        z.assign(f.begin(), f.end());
        if (predict_class(z, protos, distance) == cls) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(episode.eval_set().size());
}

} // namespace flgcn

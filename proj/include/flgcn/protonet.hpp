#pragma once

#include <span>
#include <utility>
#include <vector>

#include "flgcn/dataset.hpp"
#include "flgcn/linalg.hpp"

namespace flgcn {

enum class Distance { squared_euclidean, euclidean };

/// Class centers over whatever classes currently have labeled examples,
/// ordered by ascending class id. Empty when nothing is labeled.
struct PrototypeSet {
    std::vector<int> class_ids;
    Matrix centers; // one row per class id, same order

    bool empty() const { return class_ids.empty(); }
    int size() const { return static_cast<int>(class_ids.size()); }
    int dim() const { return centers.cols; }
};

using LabeledVec = std::pair<std::vector<double>, int>;

PrototypeSet compute_prototypes(const std::vector<LabeledVec>& labeled);
PrototypeSet episode_prototypes(const Episode& episode);

/// Softmax over negative prototype distances, aligned to protos.class_ids.
/// Stabilized by max-logit subtraction.
Vec predict_proba(std::span<const double> z, const PrototypeSet& protos,
                  Distance distance = Distance::squared_euclidean);

/// Fraction of eval instances whose argmax-probability class matches the true
/// class; probability ties resolve to the lowest class id.
double evaluate_accuracy(const std::vector<LabeledVec>& eval_set, const PrototypeSet& protos,
                         Distance distance = Distance::squared_euclidean);
double evaluate_accuracy(const Episode& episode, const PrototypeSet& protos,
                         Distance distance = Distance::squared_euclidean);

} // namespace flgcn

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "flgcn/dataset.hpp"
#include "flgcn/policy.hpp"
#include "flgcn/protonet.hpp"
#include "flgcn/rng.hpp"

namespace flgcn {

enum class PolicyKind { random, entropy, minmaxcos, kcenter, expert, flgcn };

std::string to_string(PolicyKind k);
PolicyKind parse_policy(const std::string& name);

/// Argmax over candidate scores; score ties go to the lowest instance id.
int argmax_selection(const std::vector<int>& ids, const Vec& scores);

int select_random(const Episode& episode, Rng& rng);

/// Maximum Shannon entropy (natural log) of the classifier probabilities.
/// Undefined before the first label exists, which is why this policy sits out
/// the cold-start protocol.
int select_entropy(const Episode& episode);

/// Minimum over candidates of the maximum cosine similarity to any labeled
/// instance. Empty labeled set falls back to a uniform random pick.
int select_minmaxcos(const Episode& episode, Rng& rng);

/// Greedy core-set step: the candidate farthest (Euclidean) from its nearest
/// labeled instance. Empty labeled set falls back to a uniform random pick.
int select_kcenter(const Episode& episode, Rng& rng);

/// One-step lookahead oracle: a^e_i is the evaluation accuracy of the
/// classifier rebuilt with candidate i revealed. Leaves the episode unchanged.
Vec expert_scores(const Episode& episode);
int select_expert(const Episode& episode);

class SelectionPolicy {
public:
    virtual ~SelectionPolicy() = default;
    virtual int select(const Episode& episode, Rng& rng) = 0;
    virtual PolicyKind kind() const = 0;
    std::string name() const { return to_string(kind()); }
};

/// flgcn requires params (borrowed; caller keeps them alive).
std::unique_ptr<SelectionPolicy> make_policy(PolicyKind kind, const PolicyParams* params = nullptr);

} // namespace flgcn

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flgcn/baselines.hpp"
#include "flgcn/dataset.hpp"

namespace flgcn {

struct StepRecord {
    int chosen_id;
    double accuracy_after;
};

struct SelectionTrace {
    std::vector<StepRecord> steps;
};

struct EpisodeResult {
    double final_accuracy = 0.0;
    int distinct_classes = 0;
    Vec anytime; // length budget+1 when recorded, starting with the pre-selection state
    SelectionTrace trace;
};

/// Runs select/reveal until the budget is spent. States with no labeled data
/// yet score as chance (1/N) in the anytime curve.
EpisodeResult run_episode(Episode& episode, SelectionPolicy& policy, Rng& policy_rng, bool record_anytime);

struct PolicySpec {
    PolicyKind kind;
    const PolicyParams* params = nullptr; // required for flgcn
};

struct BenchmarkSpec {
    int ways = 5;
    int shots = 1;
    Setting setting = Setting::cold;
    int episodes = 1000;
    std::uint64_t seed = 0;
    int unlabeled_per_class = 10;
    int eval_per_class = 10;
    bool record_anytime = false;
};

struct Report {
    std::string policy;
    int episodes = 0;
    double mean_accuracy = 0.0;
    double accuracy_ci95 = 0.0;
    double mean_distinct_classes = 0.0;
    double distinct_classes_ci95 = 0.0;
    Vec anytime_mean;
    Vec anytime_ci95;
    bool supported = true;
};

/// T episodes sampled deterministically from the seed. The sampled episode
/// stream depends only on (seed, episode index), so different policies run
/// against identical tasks.
Report run_benchmark(const FeaturePool& pool, const PolicySpec& policy, const BenchmarkSpec& spec);

/// One Report per policy on the shared episode stream. Policy/setting combos
/// that are undefined (entropy in cold start) come back with supported=false.
std::vector<Report> compare_policies(const FeaturePool& pool, const std::vector<PolicySpec>& policies,
                                     const BenchmarkSpec& spec);

/// Summary rows, then (optionally) per-step anytime rows. Reals use 6
/// significant digits; unsupported cells render as "-".
void write_reports_csv(std::ostream& out, const std::vector<Report>& reports, bool include_anytime);

} // namespace flgcn

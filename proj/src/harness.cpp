#include "flgcn/harness.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>
#include <string_view>

#include "flgcn/protonet.hpp"

namespace flgcn {

namespace {

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

double chance_accuracy(const Episode& ep) { return 1.0 / ep.ways(); }

double current_accuracy(const Episode& ep) {
    if (ep.labeled().empty()) return chance_accuracy(ep);
    return evaluate_accuracy(ep, episode_prototypes(ep));
}

/// Half-width of the normal-approximation 95% interval; 0 for a single sample.
double ci95(const Vec& xs, double mean) {
    const std::size_t n = xs.size();
    if (n < 2) return 0.0;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double stddev = std::sqrt(ss / static_cast<double>(n - 1));
    return 1.96 * stddev / std::sqrt(static_cast<double>(n));
}

double mean_of(const Vec& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

} // namespace

EpisodeResult run_episode(Episode& episode, SelectionPolicy& policy, Rng& policy_rng, bool record_anytime) {
    EpisodeResult result;
    if (record_anytime) result.anytime.push_back(current_accuracy(episode));
    while (episode.queries() < episode.budget()) {
        int id = -1;
        try {
            id = policy.select(episode, policy_rng);
            episode.reveal(id);
        } catch (const error& e) {
            fail(e.code(), "step " + std::to_string(episode.queries()) + ": " + e.what());
        }
        const double acc = current_accuracy(episode);
        if (record_anytime) result.anytime.push_back(acc);
        result.trace.steps.push_back({id, acc});
    }
    result.final_accuracy = current_accuracy(episode);
    std::set<int> classes;
    for (const auto& [_, cls] : episode.labeled()) classes.insert(cls);
    result.distinct_classes = static_cast<int>(classes.size());
    return result;
}

Report run_benchmark(const FeaturePool& pool, const PolicySpec& policy, const BenchmarkSpec& spec) {
    if (policy.kind == PolicyKind::entropy && spec.setting == Setting::cold)
        fail(errc::unsupported, "entropy policy is undefined in the cold-start setting");
    return compare_policies(pool, {policy}, spec).front();
}

std::vector<Report> compare_policies(const FeaturePool& pool, const std::vector<PolicySpec>& policies,
                                     const BenchmarkSpec& spec) {
    if (pool.split() != Split::meta_test) fail(errc::config, "benchmarks expect a meta-test pool");
    if (spec.episodes < 1) fail(errc::config, "episode count must be >= 1");

    struct Agg {
        Vec accs, classes;
        std::vector<Vec> anytimes;
        bool supported = true;
    };
    std::vector<Agg> agg(policies.size());
    std::vector<std::unique_ptr<SelectionPolicy>> impls;
    for (std::size_t p = 0; p < policies.size(); ++p) {
        agg[p].supported = !(policies[p].kind == PolicyKind::entropy && spec.setting == Setting::cold);
        impls.push_back(make_policy(policies[p].kind, policies[p].params));
    }

    for (int e = 0; e < spec.episodes; ++e) {
        Rng sample_rng(derive_stream(spec.seed, static_cast<std::uint64_t>(e)));
        const Episode base = sample_episode(pool, spec.ways, spec.shots, spec.setting, sample_rng,
                                            spec.unlabeled_per_class, spec.eval_per_class);
        for (std::size_t p = 0; p < policies.size(); ++p) {
            if (!agg[p].supported) continue;
            Episode episode = base; // every policy sees the identical task
            Rng policy_rng(derive_stream(spec.seed ^ fnv1a64(impls[p]->name()),
                                         static_cast<std::uint64_t>(e)));
            EpisodeResult r = run_episode(episode, *impls[p], policy_rng, spec.record_anytime);
            agg[p].accs.push_back(r.final_accuracy);
            agg[p].classes.push_back(static_cast<double>(r.distinct_classes));
            if (spec.record_anytime) agg[p].anytimes.push_back(std::move(r.anytime));
        }
    }

    std::vector<Report> reports(policies.size());
    for (std::size_t p = 0; p < policies.size(); ++p) {
        Report& rep = reports[p];
        rep.policy = impls[p]->name();
        rep.supported = agg[p].supported;
        if (!rep.supported) continue;
        rep.episodes = spec.episodes;
        rep.mean_accuracy = mean_of(agg[p].accs);
        rep.accuracy_ci95 = ci95(agg[p].accs, rep.mean_accuracy);
        rep.mean_distinct_classes = mean_of(agg[p].classes);
        rep.distinct_classes_ci95 = ci95(agg[p].classes, rep.mean_distinct_classes);
        if (spec.record_anytime && !agg[p].anytimes.empty()) {
            const std::size_t len = agg[p].anytimes.front().size();
            rep.anytime_mean.assign(len, 0.0);
            rep.anytime_ci95.assign(len, 0.0);
            Vec column(agg[p].anytimes.size());
            for (std::size_t s = 0; s < len; ++s) {
                for (std::size_t e = 0; e < agg[p].anytimes.size(); ++e) column[e] = agg[p].anytimes[e][s];
                rep.anytime_mean[s] = mean_of(column);
                rep.anytime_ci95[s] = ci95(column, rep.anytime_mean[s]);
            }
        }
    }
    return reports;
}

void write_reports_csv(std::ostream& out, const std::vector<Report>& reports, bool include_anytime) {
    char buf[192];
    out << "policy,episodes,mean_acc,ci95,mean_classes,classes_ci95\n";
    for (const auto& r : reports) {
        if (!r.supported) {
            out << r.policy << ",0,-,-,-,-\n";
            continue;
        }
        std::snprintf(buf, sizeof(buf), "%s,%d,%.6g,%.6g,%.6g,%.6g\n", r.policy.c_str(), r.episodes,
                      r.mean_accuracy, r.accuracy_ci95, r.mean_distinct_classes, r.distinct_classes_ci95);
        out << buf;
    }
    if (!include_anytime) return;
    bool any = false;
    for (const auto& r : reports) any = any || (r.supported && !r.anytime_mean.empty());
    if (!any) return;
    out << "policy,step,mean_acc,ci95\n";
    for (const auto& r : reports) {
        if (!r.supported) continue;
        for (std::size_t s = 0; s < r.anytime_mean.size(); ++s) {
            std::snprintf(buf, sizeof(buf), "%s,%zu,%.6g,%.6g\n", r.policy.c_str(), s, r.anytime_mean[s],
                          r.anytime_ci95[s]);
            out << buf;
        }
    }
}

} // namespace flgcn

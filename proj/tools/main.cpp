#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flgcn/baselines.hpp"
#include "flgcn/dataset.hpp"
#include "flgcn/harness.hpp"
#include "flgcn/policy.hpp"
#include "flgcn/trainer.hpp"

namespace {

using namespace flgcn;

FeaturePool load_data(const std::string& path, Split csv_split) { return load_pool(path, csv_split); }

int cmd_gen(const std::string& out_dir, const SyntheticSpec& spec) {
    FeaturePool pool = generate_synthetic(spec);
    save_pool(pool, out_dir);
    std::printf("wrote %d instances (%d classes, dim %d, %s) to %s\n", pool.size(),
                static_cast<int>(pool.class_ids().size()), pool.dim(), to_string(pool.split()).c_str(),
                out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& data, const PolicyConfig& base_config, TrainConfig train_config,
              const std::string& log_path) {
    FeaturePool pool = load_data(data, Split::meta_train);
    if (pool.split() != Split::meta_train) fail(errc::config, "train expects a meta-train pool");
    PolicyConfig cfg = base_config;
    cfg.feature_dim = pool.dim();

    std::ofstream log_file;
    std::ostream* log_stream = &std::cout;
    if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) fail(errc::format, "cannot write " + log_path);
        log_stream = &log_file;
    }
    TrainResult result = meta_train(pool, cfg, train_config, log_stream);
    std::printf("trained %d iterations; checkpoint at %s\n", train_config.iterations,
                train_config.save_path.c_str());
    if (!result.log.empty())
        std::printf("final mean loss %.6g, mean eval acc %.6g\n", result.log.back().mean_loss,
                    result.log.back().mean_eval_acc);
    return 0;
}

std::vector<PolicySpec> resolve_policies(const std::string& names, const std::string& checkpoint,
                                         PolicyParams& params_storage, bool& params_loaded,
                                         const BenchmarkSpec& spec, const FeaturePool& pool) {
    std::vector<PolicySpec> out;
    std::stringstream ss(names);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        PolicySpec ps{parse_policy(tok), nullptr};
        if (ps.kind == PolicyKind::flgcn) {
            if (checkpoint.empty()) fail(errc::config, "policy flgcn requires --checkpoint");
            if (!params_loaded) {
                params_storage = load_checkpoint(checkpoint);
                params_loaded = true;
            }
            const PolicyConfig& c = params_storage.config;
            if (c.ways != spec.ways || c.setting != spec.setting || c.feature_dim != pool.dim())
                fail(errc::config, "checkpoint was trained for " + std::to_string(c.ways) + "-way " +
                                       to_string(c.setting) + " with dim " + std::to_string(c.feature_dim) +
                                       "; requested " + std::to_string(spec.ways) + "-way " +
                                       to_string(spec.setting) + " with dim " + std::to_string(pool.dim()));
            ps.params = &params_storage;
        }
        out.push_back(ps);
    }
    if (out.empty()) fail(errc::config, "no policies given");
    return out;
}

int cmd_eval(const std::string& data, const std::string& policy_name, const std::string& checkpoint,
             const BenchmarkSpec& spec, const std::string& report_path) {
    FeaturePool pool = load_data(data, Split::meta_test);
    PolicyParams params;
    bool loaded = false;
    auto policies = resolve_policies(policy_name, checkpoint, params, loaded, spec, pool);
    Report report = run_benchmark(pool, policies.front(), spec);

    std::ofstream out(report_path);
    if (!out) fail(errc::format, "cannot write " + report_path);
    write_reports_csv(out, {report}, spec.record_anytime);
    std::printf("%s: %d episodes, mean acc %.6g (ci95 %.6g), mean classes %.6g (ci95 %.6g)\n",
                report.policy.c_str(), report.episodes, report.mean_accuracy, report.accuracy_ci95,
                report.mean_distinct_classes, report.distinct_classes_ci95);
    return 0;
}

int cmd_compare(const std::string& data, const std::string& policy_names, const std::string& checkpoint,
                const BenchmarkSpec& spec, const std::string& out_path) {
    FeaturePool pool = load_data(data, Split::meta_test);
    PolicyParams params;
    bool loaded = false;
    auto policies = resolve_policies(policy_names, checkpoint, params, loaded, spec, pool);
    auto reports = compare_policies(pool, policies, spec);

    std::ofstream out(out_path);
    if (!out) fail(errc::format, "cannot write " + out_path);
    write_reports_csv(out, reports, spec.record_anytime);
    for (const auto& r : reports) {
        if (!r.supported) {
            std::printf("%s: unsupported in this setting\n", r.policy.c_str());
            continue;
        }
        std::printf("%s: mean acc %.6g (ci95 %.6g), mean classes %.6g\n", r.policy.c_str(), r.mean_accuracy,
                    r.accuracy_ci95, r.mean_distinct_classes);
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    const double tolerance = 1e-4;
    double worst = 0.0;
    for (int s = 0; s < 5; ++s) {
        GradCheckReport report = gradcheck_suite(seed + s);
        std::printf("seed %llu: max relative error %.3g\n",
                    static_cast<unsigned long long>(seed + s), report.max_rel_error);
        worst = std::max(worst, report.max_rel_error);
    }
    std::printf("overall max relative error %.3g (tolerance %.1g)\n", worst, tolerance);
    return worst < tolerance ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Budget-aware few-shot data selection: synthetic pools, policy training, evaluation"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a synthetic feature pool");
    SyntheticSpec spec;
    std::string gen_out, gen_split = "meta-test";
    gen->add_option("--classes", spec.n_classes, "Number of classes")->required();
    gen->add_option("--per-class", spec.per_class, "Instances per class")->required();
    gen->add_option("--dim", spec.dim, "Feature dimension")->required();
    gen->add_option("--spread", spec.spread, "Intra-class stddev")->required();
    gen->add_option("--seed", spec.seed, "RNG seed")->required();
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--split", gen_split, "meta-train|meta-test")->check(CLI::IsMember({"meta-train", "meta-test"}));

    // train
    auto* train = app.add_subcommand("train", "Meta-train the selection policy by expert imitation");
    std::string train_data, train_setting = "cold", train_loss = "margin", train_out, train_log;
    PolicyConfig pcfg;
    TrainConfig tcfg;
    train->add_option("--data", train_data, "Dataset directory or CSV")->required();
    train->add_option("--ways", pcfg.ways, "Classes per episode")->required();
    train->add_option("--shots", tcfg.shots, "Shots (budget = ways*shots)")->required();
    train->add_option("--setting", train_setting, "cold|warm")->check(CLI::IsMember({"cold", "warm"}));
    train->add_option("--iters", tcfg.iterations, "Training iterations");
    train->add_option("--batch", tcfg.batch_tasks, "Tasks per iteration");
    train->add_option("--lr", tcfg.learning_rate, "Learning rate");
    train->add_option("--wd", tcfg.weight_decay, "Weight decay");
    train->add_option("--layers", pcfg.layers, "Message passing rounds");
    train->add_option("--hidden", pcfg.hidden, "Hidden width");
    train->add_option("--loss", train_loss, "margin|mse")->check(CLI::IsMember({"margin", "mse"}));
    train->add_option("--seed", tcfg.seed, "RNG seed")->required();
    train->add_option("--out", tcfg.save_path, "Checkpoint path (JSON)")->required();
    train->add_option("--save-every", tcfg.save_every, "Checkpoint every N iterations");
    train->add_option("--log", train_log, "Training log CSV (default: stdout)");
    train->add_option("--threads", tcfg.threads, "Rollout threads (0 = hardware)");
    train->add_option("--pool-per-class", tcfg.unlabeled_per_class, "Unlabeled instances per class");
    train->add_option("--eval-per-class", tcfg.eval_per_class, "Evaluation instances per class");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate one policy on meta-test episodes");
    std::string eval_data, eval_policy, eval_checkpoint, eval_setting = "cold", eval_report;
    BenchmarkSpec espec;
    eval->add_option("--data", eval_data, "Dataset directory or CSV")->required();
    eval->add_option("--policy", eval_policy, "random|entropy|minmaxcos|kcenter|expert|flgcn")->required();
    eval->add_option("--checkpoint", eval_checkpoint, "Policy checkpoint (flgcn)");
    eval->add_option("--ways", espec.ways, "Classes per episode")->required();
    eval->add_option("--shots", espec.shots, "Shots (budget = ways*shots)")->required();
    eval->add_option("--setting", eval_setting, "cold|warm")->check(CLI::IsMember({"cold", "warm"}));
    eval->add_option("--episodes", espec.episodes, "Episode count")->required();
    eval->add_option("--seed", espec.seed, "RNG seed")->required();
    eval->add_option("--report", eval_report, "Report CSV path")->required();
    eval->add_flag("--anytime", espec.record_anytime, "Record per-step accuracies");
    eval->add_option("--pool-per-class", espec.unlabeled_per_class, "Unlabeled instances per class");
    eval->add_option("--eval-per-class", espec.eval_per_class, "Evaluation instances per class");

    // compare
    auto* compare = app.add_subcommand("compare", "Run several policies on identical episode streams");
    std::string cmp_data, cmp_policies, cmp_checkpoint, cmp_setting = "cold", cmp_out;
    BenchmarkSpec cspec;
    compare->add_option("--data", cmp_data, "Dataset directory or CSV")->required();
    compare->add_option("--policies", cmp_policies, "Comma-separated policy names")->required();
    compare->add_option("--checkpoint", cmp_checkpoint, "Policy checkpoint (flgcn)");
    compare->add_option("--ways", cspec.ways, "Classes per episode")->required();
    compare->add_option("--shots", cspec.shots, "Shots (budget = ways*shots)")->required();
    compare->add_option("--setting", cmp_setting, "cold|warm")->check(CLI::IsMember({"cold", "warm"}));
    compare->add_option("--episodes", cspec.episodes, "Episode count")->required();
    compare->add_option("--seed", cspec.seed, "RNG seed")->required();
    compare->add_option("--out", cmp_out, "Comparison CSV path")->required();
    compare->add_flag("--anytime", cspec.record_anytime, "Record per-step accuracies");
    compare->add_option("--pool-per-class", cspec.unlabeled_per_class, "Unlabeled instances per class");
    compare->add_option("--eval-per-class", cspec.eval_per_class, "Evaluation instances per class");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the policy gradients");
    std::uint64_t gc_seed = 1;
    gradcheck->add_option("--seed", gc_seed, "Base seed (runs seed..seed+4)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            spec.split = parse_split(gen_split);
            return cmd_gen(gen_out, spec);
        }
        if (train->parsed()) {
            pcfg.setting = parse_setting(train_setting);
            tcfg.loss_mode = parse_loss_mode(train_loss);
            return cmd_train(train_data, pcfg, tcfg, train_log);
        }
        if (eval->parsed()) {
            espec.setting = parse_setting(eval_setting);
            return cmd_eval(eval_data, eval_policy, eval_checkpoint, espec, eval_report);
        }
        if (compare->parsed()) {
            cspec.setting = parse_setting(cmp_setting);
            return cmd_compare(cmp_data, cmp_policies, cmp_checkpoint, cspec, cmp_out);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed);
    } catch (const flgcn::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

#include "flgcn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>
#include <thread>

#include "flgcn/baselines.hpp"
#include "flgcn/protonet.hpp"

namespace flgcn {

std::string to_string(LossMode m) { return m == LossMode::margin_rank ? "margin" : "mse"; }

LossMode parse_loss_mode(const std::string& s) {
    if (s == "margin" || s == "margin_rank") return LossMode::margin_rank;
    if (s == "mse") return LossMode::mse;
    fail(errc::format, "unknown loss mode '" + s + "'");
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) fail(errc::config, "learning rate must be positive");
    if (batch_tasks < 1) fail(errc::config, "batch_tasks must be >= 1");
    if (iterations < 0) fail(errc::config, "iterations must be >= 0");
    if (shots < 1) fail(errc::config, "shots must be >= 1");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) fail(errc::config, "betas must lie in [0,1)");
    if (epsilon <= 0.0) fail(errc::config, "epsilon must be positive");
}

// ---------------------------------------------------------------------------
// Losses

LossResult margin_rank_loss(const Vec& expert_acc, const Vec& scores) {
    if (expert_acc.size() != scores.size()) fail(errc::shape, "expert accuracies and scores differ in length");
    const int n = static_cast<int>(scores.size());
    LossResult r;
    r.dscores.assign(n, 0.0);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double da = expert_acc[i] - expert_acc[j];
            if (da == 0.0) continue; // tied pair carries no ordering signal
            ++r.valid_pairs;
            const double sign = da > 0.0 ? 1.0 : -1.0;
            const double term = 1.0 - sign * (scores[i] - scores[j]);
            if (term > 0.0) {
                sum += term;
                r.dscores[i] -= sign;
                r.dscores[j] += sign;
            }
        }
    }
    if (r.valid_pairs == 0) return r;
    r.loss = sum / r.valid_pairs;
    for (double& g : r.dscores) g /= r.valid_pairs;
    return r;
}

LossResult mse_loss(const Vec& expert_acc, const Vec& scores, double current_acc) {
    if (expert_acc.size() != scores.size()) fail(errc::shape, "expert accuracies and scores differ in length");
    const int n = static_cast<int>(scores.size());
    LossResult r;
    r.dscores.assign(n, 0.0);
    if (n == 0) return r;
    for (int i = 0; i < n; ++i) {
        const double err = scores[i] - (expert_acc[i] - current_acc);
        r.loss += err * err;
        r.dscores[i] = 2.0 * err / n;
    }
    r.loss /= n;
    r.valid_pairs = n;
    return r;
}

// ---------------------------------------------------------------------------
// Backward pass

namespace {

/// dcos flows into both arguments of cos(a, b). Zero-norm inputs pin cos at 0,
/// so they get no gradient.
void cos_backward(double dcos, std::span<const double> xa, std::span<const double> xb, double na, double nb,
                  double cos_ab, std::span<double> da, std::span<double> db) {
    if (na == 0.0 || nb == 0.0) return;
    const double inv = 1.0 / (na * nb);
    axpy(dcos * inv, xb, da);
    axpy(-dcos * cos_ab / (na * na), xa, da);
    axpy(dcos * inv, xa, db);
    axpy(-dcos * cos_ab / (nb * nb), xb, db);
}

/// Backward through one intra pass. X are the layer inputs of the component
/// graph; accumulates into dW and dX.
void intra_backward(const Matrix& X, const Vec& norms, const GraphPassTrace& t, const Matrix& W, PhiMode mode,
                    const Matrix& dout, Matrix& dW, Matrix& dX) {
    const int n = X.rows;
    if (n == 0) return;
    const int d_out = W.rows;
    Matrix dmsg(n, d_out);
    Vec dpre(d_out), du(d_out), wt_dmsg(W.cols);
    const double cos_scale = mode == PhiMode::shifted_cosine ? 0.5 : 1.0;

    for (int i = 0; i < n; ++i) {
        if (t.z[i] == 0.0) continue;
        bool live = false;
        for (int r = 0; r < d_out; ++r) {
            dpre[r] = t.pre(i, r) > 0.0 ? dout(i, r) : 0.0;
            live = live || dpre[r] != 0.0;
        }
        if (!live) continue;
        const double inv_z = 1.0 / t.z[i];
        for (int r = 0; r < d_out; ++r) du[r] = dpre[r] * inv_z;
        const double dz = -dot(dpre, t.pre.row(i)) * inv_z;
        for (int j = 0; j < n; ++j) {
            const double dphi = dot(du, t.msg.row(j)) + dz;
            axpy(t.phi(i, j), du, dmsg.row(j));
            const double cos_ij = mode == PhiMode::shifted_cosine ? 2.0 * t.phi(i, j) - 1.0 : t.phi(i, j);
            cos_backward(dphi * cos_scale, X.row(i), X.row(j), norms[i], norms[j], cos_ij, dX.row(i), dX.row(j));
        }
    }
    for (int j = 0; j < n; ++j) {
        add_outer(dW, dmsg.row(j), X.row(j));
        matvec_t(W, dmsg.row(j), wt_dmsg);
        axpy(1.0, wt_dmsg, dX.row(j));
    }
}

/// Backward through one inter pass (src -> dst); accumulates into dW_a, the
/// dst input adjoints dX and the src input adjoints dY.
void inter_backward(const Matrix& X, const Vec& x_norms, const Matrix& Y, const Vec& y_norms,
                    const GraphPassTrace& t, const Matrix& W_a, PhiMode mode, bool normalize, const Matrix& dout,
                    Matrix& dW_a, Matrix& dX, Matrix& dY) {
    const int n = X.rows, s = Y.rows;
    if (n == 0 || s == 0) return;
    const int d_out = W_a.rows;
    Matrix dmsg(s, d_out);
    Vec dpre(d_out), du(d_out), wt_dmsg(W_a.cols);
    const double cos_scale = mode == PhiMode::shifted_cosine ? 0.5 : 1.0;

    for (int j = 0; j < n; ++j) {
        if (t.z[j] == 0.0) continue;
        bool live = false;
        for (int r = 0; r < d_out; ++r) {
            dpre[r] = t.pre(j, r) > 0.0 ? dout(j, r) : 0.0;
            live = live || dpre[r] != 0.0;
        }
        if (!live) continue;
        const double inv_z = 1.0 / t.z[j];
        for (int r = 0; r < d_out; ++r) du[r] = dpre[r] * inv_z;
        const double dz = normalize ? -dot(dpre, t.pre.row(j)) * inv_z : 0.0;
        for (int k = 0; k < s; ++k) {
            const double dphi = dot(du, t.msg.row(k)) + dz;
            axpy(t.phi(j, k), du, dmsg.row(k));
            const double cos_jk = mode == PhiMode::shifted_cosine ? 2.0 * t.phi(j, k) - 1.0 : t.phi(j, k);
            cos_backward(dphi * cos_scale, X.row(j), Y.row(k), x_norms[j], y_norms[k], cos_jk, dX.row(j),
                         dY.row(k));
        }
    }
    for (int k = 0; k < s; ++k) {
        add_outer(dW_a, dmsg.row(k), Y.row(k));
        matvec_t(W_a, dmsg.row(k), wt_dmsg);
        axpy(1.0, wt_dmsg, dY.row(k));
    }
}

/// Backward through fuse: out = relu(G [h_bar; h_hat]).
void fuse_backward(const Matrix& h_bar, const Matrix& h_hat, const Matrix& fpre, const Matrix& G,
                   const Matrix& dout, Matrix& dG, Matrix& dh_bar, Matrix& dh_hat) {
    const int n = fpre.rows, d = h_bar.cols;
    Vec dfpre(G.rows), cat(2 * d), dcat(2 * d);
    for (int i = 0; i < n; ++i) {
        bool live = false;
        for (int r = 0; r < G.rows; ++r) {
            dfpre[r] = fpre(i, r) > 0.0 ? dout(i, r) : 0.0;
            live = live || dfpre[r] != 0.0;
        }
        if (!live) continue;
        auto a = h_bar.row(i);
        auto b = h_hat.row(i);
        std::copy(a.begin(), a.end(), cat.begin());
        std::copy(b.begin(), b.end(), cat.begin() + d);
        add_outer(dG, dfpre, cat);
        matvec_t(G, dfpre, dcat);
        for (int r = 0; r < d; ++r) {
            dh_bar(i, r) += dcat[r];
            dh_hat(i, r) += dcat[d + r];
        }
    }
}

} // namespace

PolicyParams backward(const ForwardTrace& trace, const PolicyParams& params, const Vec& dscores) {
    const PolicyConfig& cfg = params.config;
    const int M = cfg.layers, D = cfg.hidden, R = cfg.regressor_hidden;
    if (static_cast<int>(trace.layers.size()) != M) fail(errc::shape, "trace does not match params layer count");
    const int n_u = trace.reg_x.rows;
    const int n_l = trace.inputs.labeled.rows;
    if (static_cast<int>(dscores.size()) != n_u) fail(errc::shape, "score gradient length mismatch");

    PolicyParams g = PolicyParams::zeros(cfg);

    // Regressor.
    std::vector<Matrix> d_lout(M), d_uout(M);
    for (int m = 0; m < M; ++m) {
        d_lout[m] = Matrix(n_l, D);
        d_uout[m] = Matrix(n_u, D);
    }
    Vec hidden(R), dh1(R), dx(M * D);
    for (int j = 0; j < n_u; ++j) {
        const double ds = dscores[j];
        if (ds == 0.0) continue;
        for (int r = 0; r < R; ++r) {
            const double h = trace.reg_h1(j, r);
            hidden[r] = h >= 0.0 ? h : cfg.leaky_slope * h;
            dh1[r] = ds * params.reg_w2(0, r) * (h >= 0.0 ? 1.0 : cfg.leaky_slope);
        }
        axpy(ds, hidden, g.reg_w2.row(0));
        g.reg_b2(0, 0) += ds;
        add_outer(g.reg_w1, dh1, trace.reg_x.row(j));
        for (int r = 0; r < R; ++r) g.reg_b1(r, 0) += dh1[r];
        matvec_t(params.reg_w1, dh1, dx);
        for (int m = 0; m < M; ++m)
            for (int r = 0; r < D; ++r) d_uout[m](j, r) += dx[m * D + r];
    }

    // Layers, last to first.
    for (int m = M - 1; m >= 0; --m) {
        const LayerTrace& lt = trace.layers[m];
        const LayerWeights& w = params.layers[m];
        LayerWeights& gw = g.layers[m];
        const int p = lt.in_u.cols;

        Matrix d_in_l(n_l, p), d_in_u(n_u, p);
        Matrix dh_bar_l(n_l, D), dh_hat_l(n_l, D), dh_bar_u(n_u, D), dh_hat_u(n_u, D);

        fuse_backward(lt.intra_l.out, lt.inter_l.out, lt.fpre_l, w.G, d_lout[m], gw.G, dh_bar_l, dh_hat_l);
        fuse_backward(lt.intra_u.out, lt.inter_u.out, lt.fpre_u, w.G, d_uout[m], gw.G, dh_bar_u, dh_hat_u);

        intra_backward(lt.in_l, lt.in_l_norm, lt.intra_l, w.W_l, cfg.phi_mode, dh_bar_l, gw.W_l, d_in_l);
        intra_backward(lt.in_u, lt.in_u_norm, lt.intra_u, w.W_u, cfg.phi_mode, dh_bar_u, gw.W_u, d_in_u);
        // dst labeled <- src unlabeled, then dst unlabeled <- src labeled; W_a shared.
        inter_backward(lt.in_l, lt.in_l_norm, lt.in_u, lt.in_u_norm, lt.inter_l, w.W_a, cfg.phi_mode,
                       cfg.inter_norm, dh_hat_l, gw.W_a, d_in_l, d_in_u);
        inter_backward(lt.in_u, lt.in_u_norm, lt.in_l, lt.in_l_norm, lt.inter_u, w.W_a, cfg.phi_mode,
                       cfg.inter_norm, dh_hat_u, gw.W_a, d_in_u, d_in_l);

        if (m > 0) {
            for (int i = 0; i < n_l; ++i) axpy(1.0, d_in_l.row(i), d_lout[m - 1].row(i));
            for (int j = 0; j < n_u; ++j) axpy(1.0, d_in_u.row(j), d_uout[m - 1].row(j));
        }
        // Layer-0 inputs are constants; their adjoints stop here.
    }
    return g;
}

// ---------------------------------------------------------------------------
// Adam

AdamOptimizer::AdamOptimizer(const PolicyConfig& policy_config, const TrainConfig& config)
    : cfg_(config), m_(PolicyParams::zeros(policy_config)), v_(PolicyParams::zeros(policy_config)) {
    cfg_.validate();
}

void AdamOptimizer::step(PolicyParams& params, const PolicyParams& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    auto pb = params.blocks();
    auto gb = grads.blocks();
    auto mb = m_.blocks();
    auto vb = v_.blocks();
    for (std::size_t b = 0; b < pb.size(); ++b) {
        auto& p = pb[b].m->a;
        const auto& gr = gb[b].m->a;
        auto& m1 = mb[b].m->a;
        auto& m2 = vb[b].m->a;
        if (p.size() != gr.size()) fail(errc::shape, "gradient block " + pb[b].name + " shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            double grad = gr[i];
            if (!std::isfinite(grad)) fail(errc::training, "non-finite gradient in block " + pb[b].name);
            if (!cfg_.decoupled_weight_decay && cfg_.weight_decay != 0.0) grad += cfg_.weight_decay * p[i];
            if (cfg_.decoupled_weight_decay && cfg_.weight_decay != 0.0)
                p[i] *= 1.0 - cfg_.learning_rate * cfg_.weight_decay;
            m1[i] = cfg_.beta1 * m1[i] + (1.0 - cfg_.beta1) * grad;
            m2[i] = cfg_.beta2 * m2[i] + (1.0 - cfg_.beta2) * grad * grad;
            const double mhat = m1[i] / bc1;
            const double vhat = m2[i] / bc2;
            p[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Meta-training

namespace {

void add_params(PolicyParams& dst, const PolicyParams& src) {
    auto d = dst.blocks();
    auto s = src.blocks();
    for (std::size_t b = 0; b < d.size(); ++b)
        for (std::size_t i = 0; i < d[b].m->a.size(); ++i) d[b].m->a[i] += s[b].m->a[i];
}

void scale_params(PolicyParams& p, double alpha) {
    for (auto& block : p.blocks())
        for (double& v : block.m->a) v *= alpha;
}

struct RolloutResult {
    PolicyParams grad_sum;
    double loss_sum = 0.0;
    double final_acc = 0.0;
    int steps = 0;
};

/// One full-budget rollout with the policy's own picks and per-step expert
/// supervision. `episode` is consumed.
RolloutResult run_rollout(Episode& episode, const PolicyParams& params, const TrainConfig& cfg) {
    RolloutResult out;
    out.grad_sum = PolicyParams::zeros(params.config);
    const int budget = episode.budget();
    for (int t = 0; t < budget; ++t) {
        double current_acc = 0.0;
        if (cfg.loss_mode == LossMode::mse && !episode.labeled().empty())
            current_acc = evaluate_accuracy(episode, episode_prototypes(episode));
        const Vec acc = expert_scores(episode);
        ForwardTrace trace;
        const Vec scores = forward_scores(episode, params, &trace);
        const LossResult lr = cfg.loss_mode == LossMode::margin_rank ? margin_rank_loss(acc, scores)
                                                                     : mse_loss(acc, scores, current_acc);
        out.loss_sum += lr.loss;
        if (std::any_of(lr.dscores.begin(), lr.dscores.end(), [](double v) { return v != 0.0; }))
            add_params(out.grad_sum, backward(trace, params, lr.dscores));
        episode.reveal(argmax_selection(episode.unlabeled_ids(), scores));
        ++out.steps;
    }
    out.final_acc = episode.labeled().empty() ? 0.0 : evaluate_accuracy(episode, episode_prototypes(episode));
    return out;
}

} // namespace

TrainResult meta_train(const FeaturePool& pool, const PolicyConfig& policy_config, const TrainConfig& config,
                       std::ostream* log_stream) {
    config.validate();
    policy_config.validate();
    if (policy_config.feature_dim != pool.dim())
        fail(errc::config, "policy feature_dim " + std::to_string(policy_config.feature_dim) +
                               " does not match pool dim " + std::to_string(pool.dim()));

    TrainResult result{PolicyParams::init(policy_config, derive_stream(config.seed, 0)), {}};
    AdamOptimizer optimizer(policy_config, config);
    if (log_stream) *log_stream << "iter,mean_loss,mean_eval_acc\n";

    int n_threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::clamp(n_threads, 1, config.batch_tasks);

    char buf[96];
    for (int iter = 0; iter < config.iterations; ++iter) {
        std::vector<Episode> batch;
        batch.reserve(config.batch_tasks);
        for (int t = 0; t < config.batch_tasks; ++t) {
            Rng rng(derive_stream(config.seed,
                                  1 + static_cast<std::uint64_t>(iter) * config.batch_tasks + t));
            batch.push_back(sample_episode(pool, policy_config.ways, config.shots, policy_config.setting, rng,
                                           config.unlabeled_per_class, config.eval_per_class));
        }

        // Rollouts are independent; gradients reduce in task order below, so
        // the result does not depend on scheduling.
        std::vector<RolloutResult> rollouts(config.batch_tasks);
        std::vector<std::exception_ptr> errors(n_threads);
        {
            std::vector<std::thread> workers;
            for (int w = 0; w < n_threads; ++w) {
                workers.emplace_back([&, w]() {
                    try {
                        for (int t = w; t < config.batch_tasks; t += n_threads)
                            rollouts[t] = run_rollout(batch[t], result.params, config);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
            for (auto& th : workers) th.join();
        }
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);

        PolicyParams total = PolicyParams::zeros(policy_config);
        double loss_total = 0.0, acc_total = 0.0;
        long steps_total = 0;
        for (const auto& r : rollouts) {
            add_params(total, r.grad_sum);
            loss_total += r.loss_sum;
            acc_total += r.final_acc;
            steps_total += r.steps;
        }
        if (steps_total == 0) fail(errc::training, "no rollout steps executed");
        scale_params(total, 1.0 / static_cast<double>(steps_total));
        const double mean_loss = loss_total / static_cast<double>(steps_total);
        const double mean_acc = acc_total / config.batch_tasks;
        if (!std::isfinite(mean_loss)) fail(errc::training, "non-finite loss at iteration " + std::to_string(iter + 1));

        optimizer.step(result.params, total);
        result.log.push_back({iter + 1, mean_loss, mean_acc});
        if (log_stream) {
            std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g\n", iter + 1, mean_loss, mean_acc);
            *log_stream << buf;
            log_stream->flush();
        }
        if (config.save_every > 0 && !config.save_path.empty() && (iter + 1) % config.save_every == 0)
            save_checkpoint(result.params, config.save_path);
    }
    if (!config.save_path.empty()) save_checkpoint(result.params, config.save_path);
    return result;
}

// ---------------------------------------------------------------------------
// Finite-difference check

GradCheckReport gradcheck_suite(std::uint64_t seed, PhiMode phi_mode, bool inter_norm) {
    SyntheticSpec spec;
    spec.n_classes = 2;
    spec.per_class = 6;
    spec.dim = 4;
    spec.spread = 0.5;
    spec.seed = derive_stream(seed, 41);
    const FeaturePool pool = generate_synthetic(spec);
    const int c0 = pool.class_ids()[0], c1 = pool.class_ids()[1];

    struct Variant {
        Setting setting;
        bool with_labels;
    };
    const Variant variants[] = {{Setting::warm, true}, {Setting::cold, true}, {Setting::cold, false}};

    GradCheckReport report;
    const double h = 1e-5;
    int variant_idx = 0;
    for (const auto& variant : variants) {
        PolicyConfig cfg;
        cfg.layers = 2;
        cfg.hidden = 6;
        cfg.ways = 2;
        cfg.feature_dim = 4;
        cfg.setting = variant.setting;
        cfg.phi_mode = phi_mode;
        cfg.inter_norm = inter_norm;

        std::vector<std::pair<int, int>> labeled;
        if (variant.with_labels) labeled = {{0, c0}, {6, c1}};
        Episode episode = Episode::manual(pool, {c0, c1}, labeled, {1, 2, 7}, {}, 3, variant.setting);

        PolicyParams params = PolicyParams::init(cfg, derive_stream(seed, 7 + variant_idx));
        Rng grng(derive_stream(seed, 100 + variant_idx));
        Vec weight(episode.unlabeled_ids().size());
        for (double& v : weight) v = 2.0 * grng.uniform01() - 1.0;

        ForwardTrace trace;
        forward_scores(episode, params, &trace);
        const PolicyParams analytic = backward(trace, params, weight);

        auto objective = [&]() {
            Vec s = forward_scores(episode, params);
            return dot(weight, s);
        };

        auto blocks = params.blocks();
        auto ana_blocks = analytic.blocks();
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            double block_max = 0.0;
            for (std::size_t i = 0; i < blocks[b].m->a.size(); ++i) {
                double& theta = blocks[b].m->a[i];
                const double saved = theta;
                theta = saved + h;
                const double up = objective();
                theta = saved - h;
                const double down = objective();
                theta = saved;
                const double numeric = (up - down) / (2.0 * h);
                const double exact = ana_blocks[b].m->a[i];
                const double rel = std::abs(exact - numeric) / std::max(std::abs(exact) + std::abs(numeric), 1e-6);
                block_max = std::max(block_max, rel);
            }
            if (variant_idx == 0) report.per_block.emplace_back(blocks[b].name, block_max);
            else
                report.per_block[b].second = std::max(report.per_block[b].second, block_max);
            report.max_rel_error = std::max(report.max_rel_error, block_max);
        }
        ++variant_idx;
    }
    return report;
}

} // namespace flgcn

#include "flgcn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace flgcn {

std::string to_string(PhiMode m) { return m == PhiMode::shifted_cosine ? "shifted_cosine" : "raw_cosine"; }

PhiMode parse_phi_mode(const std::string& s) {
    if (s == "shifted_cosine") return PhiMode::shifted_cosine;
    if (s == "raw_cosine") return PhiMode::raw_cosine;
    fail(errc::format, "unknown phi mode '" + s + "'");
}

void PolicyConfig::validate() const {
    if (layers < 1) fail(errc::config, "policy needs at least one layer");
    if (hidden < 1) fail(errc::config, "hidden dimension must be positive");
    if (ways < 1) fail(errc::config, "ways must be positive");
    if (feature_dim < 1) fail(errc::config, "feature dimension must be positive");
    if (regressor_hidden < 1) fail(errc::config, "regressor hidden size must be positive");
}

static std::vector<std::pair<std::string, std::pair<int, int>>> block_shapes(const PolicyConfig& c) {
    std::vector<std::pair<std::string, std::pair<int, int>>> shapes;
    for (int m = 0; m < c.layers; ++m) {
        const int in = m == 0 ? c.input_dim() : c.hidden;
        const std::string prefix = "layer" + std::to_string(m + 1) + ".";
        shapes.emplace_back(prefix + "W_l", std::make_pair(c.hidden, in));
        shapes.emplace_back(prefix + "W_u", std::make_pair(c.hidden, in));
        shapes.emplace_back(prefix + "W_a", std::make_pair(c.hidden, in));
        shapes.emplace_back(prefix + "G", std::make_pair(c.hidden, 2 * c.hidden));
    }
    shapes.emplace_back("regressor.W1", std::make_pair(c.regressor_hidden, c.layers * c.hidden));
    shapes.emplace_back("regressor.b1", std::make_pair(c.regressor_hidden, 1));
    shapes.emplace_back("regressor.W2", std::make_pair(1, c.regressor_hidden));
    shapes.emplace_back("regressor.b2", std::make_pair(1, 1));
    return shapes;
}

PolicyParams PolicyParams::zeros(const PolicyConfig& config) {
    config.validate();
    PolicyParams p;
    p.config = config;
    p.layers.resize(config.layers);
    for (int m = 0; m < config.layers; ++m) {
        const int in = m == 0 ? config.input_dim() : config.hidden;
        p.layers[m].W_l = Matrix(config.hidden, in);
        p.layers[m].W_u = Matrix(config.hidden, in);
        p.layers[m].W_a = Matrix(config.hidden, in);
        p.layers[m].G = Matrix(config.hidden, 2 * config.hidden);
    }
    p.reg_w1 = Matrix(config.regressor_hidden, config.layers * config.hidden);
    p.reg_b1 = Matrix(config.regressor_hidden, 1);
    p.reg_w2 = Matrix(1, config.regressor_hidden);
    p.reg_b2 = Matrix(1, 1);
    return p;
}

PolicyParams PolicyParams::init(const PolicyConfig& config, std::uint64_t seed) {
    PolicyParams p = zeros(config);
    Rng rng(seed);
    for (auto& block : p.blocks()) {
        const double a = std::sqrt(6.0 / (block.m->rows + block.m->cols));
        for (double& w : block.m->a) w = (2.0 * rng.uniform01() - 1.0) * a;
    }
    return p;
}

std::vector<PolicyParams::BlockRef> PolicyParams::blocks() {
    std::vector<BlockRef> out;
    for (std::size_t m = 0; m < layers.size(); ++m) {
        const std::string prefix = "layer" + std::to_string(m + 1) + ".";
        out.push_back({prefix + "W_l", &layers[m].W_l});
        out.push_back({prefix + "W_u", &layers[m].W_u});
        out.push_back({prefix + "W_a", &layers[m].W_a});
        out.push_back({prefix + "G", &layers[m].G});
    }
    out.push_back({"regressor.W1", &reg_w1});
    out.push_back({"regressor.b1", &reg_b1});
    out.push_back({"regressor.W2", &reg_w2});
    out.push_back({"regressor.b2", &reg_b2});
    return out;
}

std::vector<PolicyParams::ConstBlockRef> PolicyParams::blocks() const {
    std::vector<ConstBlockRef> out;
    for (const auto& ref : const_cast<PolicyParams*>(this)->blocks()) out.push_back({ref.name, ref.m});
    return out;
}

// ---------------------------------------------------------------------------
// Node inputs

GraphState build_node_inputs(const Episode& episode, const PrototypeSet& protos, const PolicyConfig& config) {
    if (config.ways != episode.ways())
        fail(errc::config, "config is " + std::to_string(config.ways) + "-way, episode is " +
                               std::to_string(episode.ways()) + "-way");
    if (config.feature_dim != episode.dim())
        fail(errc::config, "config feature_dim " + std::to_string(config.feature_dim) +
                               " does not match episode dim " + std::to_string(episode.dim()));

    const int N = config.ways;
    const int pf = config.p_field_dim();
    const auto& label_set = episode.label_set();
    auto class_pos = [&](int cls) {
        for (int k = 0; k < N; ++k)
            if (label_set[k] == cls) return k;
        fail(errc::data, "class " + std::to_string(cls) + " not in episode label set");
    };

    Vec z;
    auto fill_node = [&](std::span<double> node, int id, int one_hot_class) {
        auto f = episode.feature(id);
        for (int j = 0; j < config.feature_dim; ++j) node[j] = f[j];
        if (!protos.empty()) {
            z.assign(f.begin(), f.end());
            Vec probs = predict_proba(z, protos);
            if (config.setting == Setting::warm) {
                // Full probability vector in episode class order; classes with
                // no prototype keep probability 0.
                for (int k = 0; k < protos.size(); ++k)
                    node[config.feature_dim + class_pos(protos.class_ids[k])] = probs[k];
            } else {
                double mn = probs[0], mx = probs[0], sum = 0.0;
                for (double p : probs) {
                    mn = std::min(mn, p);
                    mx = std::max(mx, p);
                    sum += p;
                }
                node[config.feature_dim + 0] = mn;
                node[config.feature_dim + 1] = sum / probs.size();
                node[config.feature_dim + 2] = mx;
            }
        }
        if (one_hot_class >= 0) node[config.feature_dim + pf + class_pos(one_hot_class)] = 1.0;
    };

    GraphState st;
    st.labeled = Matrix(static_cast<int>(episode.labeled().size()), config.input_dim());
    st.unlabeled = Matrix(static_cast<int>(episode.unlabeled_ids().size()), config.input_dim());
    int row = 0;
    for (const auto& [id, cls] : episode.labeled()) {
        st.labeled_ids.push_back(id);
        fill_node(st.labeled.row(row++), id, cls);
    }
    row = 0;
    for (int id : episode.unlabeled_ids()) {
        st.unlabeled_ids.push_back(id);
        fill_node(st.unlabeled.row(row++), id, -1);
    }
    return st;
}

// ---------------------------------------------------------------------------
// Message passing

double affinity(std::span<const double> a, std::span<const double> b, PhiMode mode) {
    const double na = norm2(a), nb = norm2(b);
    const double c = (na == 0.0 || nb == 0.0) ? 0.0 : dot(a, b) / (na * nb);
    return mode == PhiMode::shifted_cosine ? 0.5 * (1.0 + c) : c;
}

static Vec row_norms(const Matrix& H) {
    Vec out(H.rows);
    for (int i = 0; i < H.rows; ++i) out[i] = norm2(H.row(i));
    return out;
}

static void affinity_matrix(const Matrix& A, const Vec& norm_a, const Matrix& B, const Vec& norm_b, PhiMode mode,
                            Matrix& phi) {
    phi = Matrix(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i) {
        auto ra = A.row(i);
        for (int j = 0; j < B.rows; ++j) {
            const double denom = norm_a[i] * norm_b[j];
            const double c = denom == 0.0 ? 0.0 : dot(ra, B.row(j)) / denom;
            phi(i, j) = mode == PhiMode::shifted_cosine ? 0.5 * (1.0 + c) : c;
        }
    }
}

static void relu_inplace(Matrix& m) {
    for (double& v : m.a) v = v > 0.0 ? v : 0.0;
}

/// Shared core of intra passes: dst == src == H.
static void intra_pass(const Matrix& H, const Vec& norms, const Matrix& W, PhiMode mode, GraphPassTrace& t) {
    const int n = H.rows;
    t.msg = matmul_bt(H, W); // row j = W h_j
    affinity_matrix(H, norms, H, norms, mode, t.phi);
    t.z.assign(n, 0.0);
    t.pre = Matrix(n, W.rows);
    for (int i = 0; i < n; ++i) {
        double z = 0.0;
        for (int j = 0; j < n; ++j) z += t.phi(i, j);
        t.z[i] = z;
        if (z == 0.0) continue; // message stays zero
        auto pre = t.pre.row(i);
        for (int j = 0; j < n; ++j) axpy(t.phi(i, j) / z, t.msg.row(j), pre);
    }
    t.out = t.pre;
    relu_inplace(t.out);
}

/// Shared core of inter passes: messages flow src -> dst.
static void inter_pass(const Matrix& src, const Vec& src_norms, const Matrix& dst, const Vec& dst_norms,
                       const Matrix& W_a, PhiMode mode, bool normalize, GraphPassTrace& t) {
    const int n = dst.rows, s = src.rows, d_out = W_a.rows;
    if (s == 0) {
        t.phi = Matrix(n, 0);
        t.z.assign(n, 1.0);
        t.msg = Matrix(0, d_out);
        t.pre = Matrix(n, d_out);
        t.out = Matrix(n, d_out);
        return;
    }
    t.msg = matmul_bt(src, W_a);
    affinity_matrix(dst, dst_norms, src, src_norms, mode, t.phi);
    t.z.assign(n, 1.0);
    t.pre = Matrix(n, d_out);
    for (int j = 0; j < n; ++j) {
        double z = 1.0;
        if (normalize) {
            z = 0.0;
            for (int k = 0; k < s; ++k) z += t.phi(j, k);
        }
        t.z[j] = z;
        if (z == 0.0) continue;
        auto pre = t.pre.row(j);
        for (int k = 0; k < s; ++k) axpy(t.phi(j, k) / z, t.msg.row(k), pre);
    }
    t.out = t.pre;
    relu_inplace(t.out);
}

static void check_pass_shapes(const Matrix& H, const Matrix& W, const char* what) {
    if (H.rows > 0 && H.cols != W.cols)
        fail(errc::shape, std::string(what) + ": node dim " + std::to_string(H.cols) + " vs weight expecting " +
                              std::to_string(W.cols));
}

Matrix intra_message(const Matrix& H, const Matrix& W, PhiMode mode) {
    check_pass_shapes(H, W, "intra_message");
    if (H.rows == 0) return Matrix(0, W.rows);
    GraphPassTrace t;
    intra_pass(H, row_norms(H), W, mode, t);
    return t.out;
}

Matrix inter_message(const Matrix& H_src, const Matrix& H_dst, const Matrix& W_a, PhiMode mode, bool normalize) {
    check_pass_shapes(H_src, W_a, "inter_message(src)");
    check_pass_shapes(H_dst, W_a, "inter_message(dst)");
    GraphPassTrace t;
    inter_pass(H_src, row_norms(H_src), H_dst, row_norms(H_dst), W_a, mode, normalize, t);
    return t.out;
}

Matrix fuse(const Matrix& h_bar, const Matrix& h_hat, const Matrix& G) {
    if (h_bar.rows != h_hat.rows || h_bar.cols != h_hat.cols)
        fail(errc::shape, "fuse: intra and inter blocks disagree in shape");
    if (G.cols != 2 * h_bar.cols) fail(errc::shape, "fuse: G expects concatenated width " + std::to_string(G.cols));
    Matrix out(h_bar.rows, G.rows);
    Vec cat(2 * h_bar.cols);
    for (int i = 0; i < h_bar.rows; ++i) {
        auto a = h_bar.row(i);
        auto b = h_hat.row(i);
        std::copy(a.begin(), a.end(), cat.begin());
        std::copy(b.begin(), b.end(), cat.begin() + h_bar.cols);
        matvec(G, cat, out.row(i));
    }
    relu_inplace(out);
    return out;
}

static void fuse_traced(const Matrix& h_bar, const Matrix& h_hat, const Matrix& G, Matrix& fpre, Matrix& fout) {
    fpre = Matrix(h_bar.rows, G.rows);
    Vec cat(2 * h_bar.cols);
    for (int i = 0; i < h_bar.rows; ++i) {
        auto a = h_bar.row(i);
        auto b = h_hat.row(i);
        std::copy(a.begin(), a.end(), cat.begin());
        std::copy(b.begin(), b.end(), cat.begin() + h_bar.cols);
        matvec(G, cat, fpre.row(i));
    }
    fout = fpre;
    relu_inplace(fout);
}

Vec forward_scores(const Episode& episode, const PolicyParams& params, ForwardTrace* trace) {
    if (episode.unlabeled_ids().empty()) fail(errc::no_candidates, "forward_scores: unlabeled set is empty");
    const PolicyConfig& cfg = params.config;
    if (cfg.setting != episode.setting()) fail(errc::config, "config setting does not match episode setting");

    ForwardTrace local;
    ForwardTrace& tr = trace ? *trace : local;
    tr.layers.clear();
    tr.layers.resize(cfg.layers);

    tr.inputs = build_node_inputs(episode, episode_prototypes(episode), cfg);
    const int n_u = tr.inputs.unlabeled.rows;

    Matrix cur_l = tr.inputs.labeled;
    Matrix cur_u = tr.inputs.unlabeled;
    tr.reg_x = Matrix(n_u, cfg.layers * cfg.hidden);

    for (int m = 0; m < cfg.layers; ++m) {
        LayerTrace& lt = tr.layers[m];
        const LayerWeights& w = params.layers[m];
        check_pass_shapes(cur_l, w.W_l, "forward layer(labeled)");
        check_pass_shapes(cur_u, w.W_u, "forward layer(unlabeled)");
        lt.in_l = cur_l;
        lt.in_u = cur_u;
        lt.in_l_norm = row_norms(cur_l);
        lt.in_u_norm = row_norms(cur_u);

        if (cur_l.rows > 0) intra_pass(cur_l, lt.in_l_norm, w.W_l, cfg.phi_mode, lt.intra_l);
        else {
            lt.intra_l.pre = Matrix(0, cfg.hidden);
            lt.intra_l.out = Matrix(0, cfg.hidden);
        }
        intra_pass(cur_u, lt.in_u_norm, w.W_u, cfg.phi_mode, lt.intra_u);
        inter_pass(cur_u, lt.in_u_norm, cur_l, lt.in_l_norm, w.W_a, cfg.phi_mode, cfg.inter_norm, lt.inter_l);
        inter_pass(cur_l, lt.in_l_norm, cur_u, lt.in_u_norm, w.W_a, cfg.phi_mode, cfg.inter_norm, lt.inter_u);

        fuse_traced(lt.intra_l.out, lt.inter_l.out, w.G, lt.fpre_l, lt.fout_l);
        fuse_traced(lt.intra_u.out, lt.inter_u.out, w.G, lt.fpre_u, lt.fout_u);

        for (int j = 0; j < n_u; ++j) {
            auto src = lt.fout_u.row(j);
            std::copy(src.begin(), src.end(), tr.reg_x.row(j).begin() + m * cfg.hidden);
        }
        cur_l = lt.fout_l;
        cur_u = lt.fout_u;
    }

    tr.reg_h1 = Matrix(n_u, cfg.regressor_hidden);
    tr.scores.assign(n_u, 0.0);
    Vec hidden(cfg.regressor_hidden);
    for (int j = 0; j < n_u; ++j) {
        matvec(params.reg_w1, tr.reg_x.row(j), tr.reg_h1.row(j));
        for (int r = 0; r < cfg.regressor_hidden; ++r) {
            double h = tr.reg_h1(j, r) + params.reg_b1(r, 0);
            tr.reg_h1(j, r) = h; // keep the biased pre-activation
            hidden[r] = h >= 0.0 ? h : cfg.leaky_slope * h;
        }
        tr.scores[j] = dot(params.reg_w2.row(0), hidden) + params.reg_b2(0, 0);
    }
    return tr.scores;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const PolicyParams& params, const std::string& path) {
    nlohmann::json j;
    j["config"] = {{"M", params.config.layers},
                   {"D", params.config.hidden},
                   {"ways", params.config.ways},
                   {"setting", to_string(params.config.setting)},
                   {"d", params.config.feature_dim},
                   {"regressor_hidden", params.config.regressor_hidden},
                   {"leaky_slope", params.config.leaky_slope},
                   {"phi_mode", to_string(params.config.phi_mode)},
                   {"inter_norm", params.config.inter_norm}};
    nlohmann::json weights;
    for (const auto& block : params.blocks()) {
        weights[block.name] = {{"shape", {block.m->rows, block.m->cols}}, {"data", block.m->a}};
    }
    j["weights"] = std::move(weights);
    std::ofstream out(path);
    if (!out) fail(errc::format, "cannot write " + path);
    out << j.dump(2) << "\n";
}

PolicyParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(errc::format, "cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(errc::format, path + ": " + e.what());
    }
    PolicyConfig cfg;
    try {
        const auto& c = j.at("config");
        cfg.layers = c.at("M").get<int>();
        cfg.hidden = c.at("D").get<int>();
        cfg.ways = c.at("ways").get<int>();
        cfg.setting = parse_setting(c.at("setting").get<std::string>());
        cfg.feature_dim = c.at("d").get<int>();
        cfg.regressor_hidden = c.at("regressor_hidden").get<int>();
        cfg.leaky_slope = c.at("leaky_slope").get<double>();
        cfg.phi_mode = parse_phi_mode(c.at("phi_mode").get<std::string>());
        cfg.inter_norm = c.at("inter_norm").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        fail(errc::format, path + ": bad config: " + e.what());
    }

    PolicyParams params = PolicyParams::zeros(cfg);
    const auto& weights = j.at("weights");
    for (auto& block : params.blocks()) {
        if (!weights.contains(block.name)) fail(errc::format, path + ": missing weight block " + block.name);
        const auto& w = weights.at(block.name);
        const auto shape = w.at("shape").get<std::vector<int>>();
        if (shape.size() != 2 || shape[0] != block.m->rows || shape[1] != block.m->cols)
            fail(errc::shape, path + ": block " + block.name + " has shape [" +
                                  (shape.size() == 2 ? std::to_string(shape[0]) + "," + std::to_string(shape[1])
                                                     : "?") +
                                  "], expected [" + std::to_string(block.m->rows) + "," +
                                  std::to_string(block.m->cols) + "]");
        const auto data = w.at("data").get<std::vector<double>>();
        if (data.size() != block.m->a.size())
            fail(errc::shape, path + ": block " + block.name + " data length mismatch");
        for (double v : data)
            if (!std::isfinite(v)) fail(errc::data, path + ": non-finite weight in block " + block.name);
        block.m->a = data;
    }
    return params;
}

} // namespace flgcn

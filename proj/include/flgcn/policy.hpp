#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flgcn/dataset.hpp"
#include "flgcn/linalg.hpp"
#include "flgcn/protonet.hpp"

namespace flgcn {

enum class PhiMode { shifted_cosine, raw_cosine };

std::string to_string(PhiMode m);
PhiMode parse_phi_mode(const std::string& s);

/// Architecture of the selection policy network.
///
/// Node inputs are [z; p; o]: the feature vector, a classifier-probability
/// field, and a one-hot label encoding (zeros on unlabeled nodes). In the warm
/// setting p is the full N-way probability vector; in the cold setting it is
/// the 3-dim [min, mean, max] summary over whichever prototypes exist, since
/// class alignment is meaningless while classes are still missing.
struct PolicyConfig {
    int layers = 2;            // message passing rounds M
    int hidden = 64;           // node representation width D after layer 1
    int ways = 5;              // N
    Setting setting = Setting::cold;
    int feature_dim = 0;       // d
    int regressor_hidden = 32;
    double leaky_slope = 0.01;
    PhiMode phi_mode = PhiMode::shifted_cosine;
    bool inter_norm = true;    // degree-normalize the bipartite messages too

    int p_field_dim() const { return setting == Setting::warm ? ways : 3; }
    int input_dim() const { return feature_dim + p_field_dim() + ways; }
    void validate() const;
};

/// All learnable weights plus the architecture they belong to.
struct LayerWeights {
    Matrix W_l; // labeled-graph intra message
    Matrix W_u; // unlabeled-graph intra message
    Matrix W_a; // bipartite message, shared by both directions
    Matrix G;   // fusion of [intra; inter], D x 2D
};

struct PolicyParams {
    PolicyConfig config;
    std::vector<LayerWeights> layers;
    Matrix reg_w1, reg_b1; // M*D -> regressor_hidden
    Matrix reg_w2, reg_b2; // regressor_hidden -> 1

    /// Uniform init in [-a, a], a = sqrt(6 / (fan_in + fan_out)) per block.
    static PolicyParams init(const PolicyConfig& config, std::uint64_t seed);
    static PolicyParams zeros(const PolicyConfig& config);

    struct BlockRef {
        std::string name;
        Matrix* m;
    };
    struct ConstBlockRef {
        std::string name;
        const Matrix* m;
    };
    std::vector<BlockRef> blocks();
    std::vector<ConstBlockRef> blocks() const;
};

/// Node representations for the labeled/unlabeled component graphs, rows
/// aligned to the id vectors.
struct GraphState {
    Matrix labeled;
    Matrix unlabeled;
    std::vector<int> labeled_ids;
    std::vector<int> unlabeled_ids;
};

GraphState build_node_inputs(const Episode& episode, const PrototypeSet& protos, const PolicyConfig& config);

/// phi(a, b) = (1 + cos(a, b)) / 2 in shifted mode (so edge weights form a
/// convex combination), raw cosine otherwise. cos with a zero vector is 0.
double affinity(std::span<const double> a, std::span<const double> b, PhiMode mode = PhiMode::shifted_cosine);

/// One round of degree-normalized message passing inside a fully connected
/// component graph (self-loop included): out_i = relu(sum_j phi_ij W h_j / Z_i).
Matrix intra_message(const Matrix& H, const Matrix& W, PhiMode mode = PhiMode::shifted_cosine);

/// Bipartite update of the dst block from the src block. Empty src yields zero
/// vectors. `normalize` divides by Z_j = sum_k phi_jk.
Matrix inter_message(const Matrix& H_src, const Matrix& H_dst, const Matrix& W_a,
                     PhiMode mode = PhiMode::shifted_cosine, bool normalize = true);

/// relu(G [h_bar; h_hat]) per node.
Matrix fuse(const Matrix& h_bar, const Matrix& h_hat, const Matrix& G);

/// Everything the backward pass needs; filled by forward_scores on request.
struct GraphPassTrace {
    Matrix phi; // dst x src affinities
    Vec z;      // per-dst normalization (all 1 when unnormalized)
    Matrix msg; // src x D, rows W * h_src
    Matrix pre; // dst x D, normalized pre-activation
    Matrix out; // relu(pre)
};

struct LayerTrace {
    Matrix in_l, in_u; // layer inputs
    Vec in_l_norm, in_u_norm;
    GraphPassTrace intra_l, intra_u;
    GraphPassTrace inter_l; // dst labeled, src unlabeled
    GraphPassTrace inter_u; // dst unlabeled, src labeled
    Matrix fpre_l, fout_l;
    Matrix fpre_u, fout_u;
};

struct ForwardTrace {
    GraphState inputs;
    std::vector<LayerTrace> layers;
    Matrix reg_x;  // n_u x M*D concatenated layer outputs
    Matrix reg_h1; // n_u x regressor_hidden, pre-activation
    Vec scores;
};

/// Scores every unlabeled instance: M rounds of intra+inter message passing
/// with per-layer fusion, then a two-layer regressor over the concatenated
/// layer outputs of each unlabeled node. Works with an empty labeled set.
Vec forward_scores(const Episode& episode, const PolicyParams& params, ForwardTrace* trace = nullptr);

void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

} // namespace flgcn

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stshn/autodiff.hpp"
#include "stshn/gradcheck.hpp"
#include "stshn/tensor.hpp"

namespace stshn {

// Architecture knobs. Defaults: hidden size 16, 4 attention channels, 2
// spatial layers, 7 temporal shift layers, 128 hyperedges, 3x3 neighbour
// scale.
struct Hyperparams {
    std::size_t dim = 16;
    std::size_t heads = 4;
    std::size_t spatial_layers = 2;
    std::size_t temporal_layers = 7;
    std::size_t hyperedges = 128;
    std::size_t scale = 3;
    bool use_hypergraph = true;

    std::size_t head_dim() const { return dim / heads; }
    void validate() const;
};

enum class OutputMode { classification, regression };

// All trainable arrays, in a fixed order so checkpoints and optimizer state
// line up: category embeddings, spatial q/k/v per layer and head, the
// hyperedge incidence, temporal q/k/v per layer and head, readout weights.
class ModelParams {
public:
    ModelParams() = default;
    static ModelParams init(const Hyperparams& hp, std::size_t regions, std::size_t ncat,
                            std::uint64_t seed);

    std::vector<NamedTensor>& entries() { return entries_; }
    const std::vector<NamedTensor>& entries() const { return entries_; }
    Tensor& find(const std::string& name);
    const Tensor& find(const std::string& name) const;

    const Hyperparams& hyper() const { return hyper_; }
    std::size_t regions() const { return regions_; }
    std::size_t ncat() const { return ncat_; }

private:
    friend ModelParams make_params_shell(const Hyperparams&, std::size_t, std::size_t);
    std::vector<NamedTensor> entries_;
    Hyperparams hyper_;
    std::size_t regions_ = 0, ncat_ = 0;
};

// Same layout as ModelParams::init but zero-valued (checkpoint loading).
ModelParams make_params_shell(const Hyperparams& hp, std::size_t regions, std::size_t ncat);

struct HeadVars {
    Var q, k, v;
};

// Parameters pushed onto a tape as leaves. `flat` follows entry order for
// gradient readback.
struct ParamVars {
    Var embed;
    std::vector<std::vector<HeadVars>> spatial;
    Var psi;
    std::vector<std::vector<HeadVars>> temporal;
    Var readout;
    std::vector<Var> flat;
};

ParamVars bind_params(Tape& tape, const ModelParams& params);

// Type-aware embeddings, one (R*C) x d node per slot: row (r,c) is
// X[r,t,c] * e_c.
std::vector<Var> embed_window(Tape& tape, const Tensor& window, Var embed);

// Cross-category multi-channel routed message for one (target, source) pair
// of C x d embedding blocks: per head, scaled dot-product attention over
// source categories, heads concatenated back to width d.
Var mc_rout(Tape& tape, Var e_target, Var e_source, const std::vector<HeadVars>& heads,
            std::size_t head_dim);

struct AlphaRecord {
    bool temporal = false;
    std::size_t layer = 0, slot = 0, head = 0;
    Var alpha;  // RC x RC, rows softmax-normalized per source-category group
};

// One propagation level over every slot: per slot, attention messages from
// all neighbours weighted by the normalized adjacency, then ReLU. `pair_mask`
// is the RC x RC expansion of the normalized adjacency.
std::vector<Var> spatial_layer(Tape& tape, const std::vector<Var>& slots, Var pair_mask,
                               const std::vector<HeadVars>& heads, std::size_t ncat,
                               std::size_t head_dim, std::size_t layer_index = 0,
                               std::vector<AlphaRecord>* alphas = nullptr);

// Region -> hyperedge -> region propagation with ReLU after each hop.
// Degrees come from |psi| clamped below 1e-8; psi is shared across slots and
// categories.
std::vector<Var> hypergraph_layer(Tape& tape, const std::vector<Var>& slots, Var psi,
                                  std::size_t regions, std::size_t ncat, std::size_t dim);

// Shifts information one slot forward: slot t+1 queries attend to slot t
// keys/values under the temporal adjacency; slot 0 passes through.
std::vector<Var> temporal_shift_layer(Tape& tape, const std::vector<Var>& slots, Var pair_mask,
                                      const std::vector<HeadVars>& heads, std::size_t ncat,
                                      std::size_t head_dim, std::size_t layer_index = 0,
                                      std::vector<AlphaRecord>* alphas = nullptr);

// Expands an R x R matrix to RC x RC so entry ((i,c),(j,c')) = m[i][j].
Tensor expand_pair_mask(const Tensor& m, std::size_t ncat);

struct ForwardOptions {
    bool collect_attention = false;  // record every alpha node
    bool collect_levels = false;     // record spatial-level embeddings per slot
};

struct ForwardResult {
    Var logits;  // length R*C, region-major
    Var output;  // sigmoid(logits) in classification mode, logits otherwise
    std::vector<AlphaRecord> alphas;
    std::vector<std::vector<Var>> levels;  // [spatial level][slot]
};

// Full model graph on one window of normalized inputs, shape [R, W, C].
ForwardResult forward(Tape& tape, const Tensor& window, const Tensor& a_norm,
                      const Tensor& gamma_norm, const ParamVars& pv, const Hyperparams& hp,
                      OutputMode mode, const ForwardOptions& opts = {});

// Mean attention over slots and adjacency-connected pairs, one C x C matrix
// per (layer, head). `base_mask` is the R x R adjacency whose nonzero entries
// define which pairs count.
std::vector<std::vector<Tensor>> mean_attention(const Tape& tape,
                                                const std::vector<AlphaRecord>& alphas,
                                                const Tensor& base_mask, bool temporal,
                                                std::size_t layers, std::size_t heads,
                                                std::size_t regions, std::size_t ncat);

// CSV export of learned relevance weights: per-layer spatial/temporal
// attention means and the hyperedge incidence matrix.
void export_relevance(const Tape& tape, const ForwardResult& result, const Tensor& a_norm,
                      const Tensor& gamma_norm, const ModelParams& params,
                      const std::vector<std::string>& categories, const std::string& out_dir);

}  // namespace stshn

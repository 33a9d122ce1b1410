#include "stshn/model.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "stshn/errors.hpp"
#include "stshn/rng.hpp"

namespace stshn {

void Hyperparams::validate() const {
    if (dim == 0 || heads == 0) throw ConfigError("dim and heads must be positive");
    if (dim % heads != 0)
        throw ConfigError("dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads));
    if (use_hypergraph && hyperedges == 0) throw ConfigError("hyperedges must be positive");
    if (scale % 2 == 0 || scale == 0) throw ConfigError("neighbour scale must be odd");
}

Tensor& ModelParams::find(const std::string& name) {
    for (auto& e : entries_)
        if (e.name == name) return e.value;
    throw ShapeError("no parameter named '" + name + "'");
}

const Tensor& ModelParams::find(const std::string& name) const {
    return const_cast<ModelParams*>(this)->find(name);
}

namespace {

void append_qkv(std::vector<NamedTensor>& out, const std::string& prefix, std::size_t layers,
                std::size_t heads, std::size_t head_dim, std::size_t dim) {
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t h = 0; h < heads; ++h)
            for (const char* role : {"q", "k", "v"})
                out.push_back({prefix + ".l" + std::to_string(l) + ".h" + std::to_string(h) + "." + role,
                               Tensor({head_dim, dim})});
}

}  // namespace

ModelParams make_params_shell(const Hyperparams& hp, std::size_t regions, std::size_t ncat) {
    hp.validate();
    if (regions == 0 || ncat == 0) throw ConfigError("model needs at least one region and category");
    ModelParams p;
    p.hyper_ = hp;
    p.regions_ = regions;
    p.ncat_ = ncat;
    auto& e = p.entries_;
    e.push_back({"embed.e", Tensor({ncat, hp.dim})});
    append_qkv(e, "spatial", hp.spatial_layers, hp.heads, hp.head_dim(), hp.dim);
    e.push_back({"hyper.psi", Tensor({hp.hyperedges, regions})});
    append_qkv(e, "temporal", hp.temporal_layers, hp.heads, hp.head_dim(), hp.dim);
    e.push_back({"readout.w", Tensor({ncat, hp.dim})});
    return p;
}

ModelParams ModelParams::init(const Hyperparams& hp, std::size_t regions, std::size_t ncat,
                              std::uint64_t seed) {
    ModelParams p = make_params_shell(hp, regions, ncat);
    const double psi_hi = 1.0 / std::sqrt(static_cast<double>(regions));
    for (std::size_t pi = 0; pi < p.entries_.size(); ++pi) {
        NamedTensor& e = p.entries_[pi];
        if (e.name == "readout.w") continue;  // zero-initialized
        if (e.name == "hyper.psi") {
            for (std::size_t i = 0; i < e.value.numel(); ++i)
                e.value.data[i] = counter_uniform(seed, pi, i) * psi_hi;
            continue;
        }
        const double limit = std::sqrt(6.0 / static_cast<double>(e.value.rows() + e.value.cols()));
        for (std::size_t i = 0; i < e.value.numel(); ++i)
            e.value.data[i] = (2.0 * counter_uniform(seed, pi, i) - 1.0) * limit;
    }
    return p;
}

ParamVars bind_params(Tape& tape, const ModelParams& params) {
    const Hyperparams& hp = params.hyper();
    ParamVars pv;
    std::size_t idx = 0;
    auto next = [&]() {
        Var v = tape.leaf(params.entries()[idx].value);
        ++idx;
        pv.flat.push_back(v);
        return v;
    };
    pv.embed = next();
    pv.spatial.resize(hp.spatial_layers);
    for (std::size_t l = 0; l < hp.spatial_layers; ++l)
        for (std::size_t h = 0; h < hp.heads; ++h) pv.spatial[l].push_back({next(), next(), next()});
    pv.psi = next();
    pv.temporal.resize(hp.temporal_layers);
    for (std::size_t l = 0; l < hp.temporal_layers; ++l)
        for (std::size_t h = 0; h < hp.heads; ++h) pv.temporal[l].push_back({next(), next(), next()});
    pv.readout = next();
    return pv;
}

Tensor expand_pair_mask(const Tensor& m, std::size_t ncat) {
    const std::size_t r = m.rows();
    Tensor out({r * ncat, r * ncat});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            const double v = m.at(i, j);
            if (v == 0.0) continue;
            for (std::size_t ci = 0; ci < ncat; ++ci)
                for (std::size_t cj = 0; cj < ncat; ++cj) out.at(i * ncat + ci, j * ncat + cj) = v;
        }
    return out;
}

std::vector<Var> embed_window(Tape& tape, const Tensor& window, Var embed) {
    if (window.rank() != 3)
        throw ShapeError("embed_window: window must be [R,W,C], got " + shape_str(window.shape));
    const std::size_t regions = window.shape[0], wlen = window.shape[1], ncat = window.shape[2];
    std::vector<Var> out;
    out.reserve(wlen);
    for (std::size_t t = 0; t < wlen; ++t) {
        Tensor sel({regions * ncat, ncat});
        for (std::size_t r = 0; r < regions; ++r)
            for (std::size_t c = 0; c < ncat; ++c)
                sel.at(r * ncat + c, c) = window.data[(r * wlen + t) * ncat + c];
        out.push_back(tape.matmul(tape.leaf(std::move(sel)), embed));
    }
    return out;
}

Var mc_rout(Tape& tape, Var e_target, Var e_source, const std::vector<HeadVars>& heads,
            std::size_t head_dim) {
    const std::size_t ncat = tape.value(e_target).rows();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Var> outs;
    for (const HeadVars& hv : heads) {
        Var q = tape.matmul(e_target, tape.transpose(hv.q));
        Var k = tape.matmul(e_source, tape.transpose(hv.k));
        Var v = tape.matmul(e_source, tape.transpose(hv.v));
        Var logits = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt);
        Var alpha = tape.softmax_groups(logits, ncat);
        outs.push_back(tape.matmul(alpha, v));
    }
    return tape.concat_lastdim(outs);
}

namespace {

// Shared core of the spatial and temporal propagation levels. For every slot
// pair (queries from q_slots[t], keys/values from kv_slots[t]) computes the
// masked multi-head routed messages and applies ReLU.
std::vector<Var> attention_level(Tape& tape, const std::vector<Var>& q_slots,
                                 const std::vector<Var>& kv_slots, Var pair_mask,
                                 const std::vector<HeadVars>& heads, std::size_t ncat,
                                 std::size_t head_dim, bool temporal, std::size_t layer_index,
                                 std::size_t slot_offset, std::vector<AlphaRecord>* alphas) {
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Var> qt, kt, vt;
    for (const HeadVars& hv : heads) {
        qt.push_back(tape.transpose(hv.q));
        kt.push_back(tape.transpose(hv.k));
        vt.push_back(tape.transpose(hv.v));
    }
    std::vector<Var> out;
    out.reserve(q_slots.size());
    for (std::size_t t = 0; t < q_slots.size(); ++t) {
        std::vector<Var> head_outs;
        for (std::size_t h = 0; h < heads.size(); ++h) {
            Var q = tape.matmul(q_slots[t], qt[h]);
            Var k = tape.matmul(kv_slots[t], kt[h]);
            Var v = tape.matmul(kv_slots[t], vt[h]);
            Var logits = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt);
            Var alpha = tape.softmax_groups(logits, ncat);
            if (alphas) alphas->push_back({temporal, layer_index, slot_offset + t, h, alpha});
            Var weighted = tape.mul(alpha, pair_mask);
            head_outs.push_back(tape.matmul(weighted, v));
        }
        out.push_back(tape.relu(tape.concat_lastdim(head_outs)));
    }
    return out;
}

}  // namespace

std::vector<Var> spatial_layer(Tape& tape, const std::vector<Var>& slots, Var pair_mask,
                               const std::vector<HeadVars>& heads, std::size_t ncat,
                               std::size_t head_dim, std::size_t layer_index,
                               std::vector<AlphaRecord>* alphas) {
    return attention_level(tape, slots, slots, pair_mask, heads, ncat, head_dim, false, layer_index, 0,
                           alphas);
}

std::vector<Var> temporal_shift_layer(Tape& tape, const std::vector<Var>& slots, Var pair_mask,
                                      const std::vector<HeadVars>& heads, std::size_t ncat,
                                      std::size_t head_dim, std::size_t layer_index,
                                      std::vector<AlphaRecord>* alphas) {
    if (slots.size() < 2) throw ConfigError("temporal shift needs at least 2 slots");
    std::vector<Var> q_slots(slots.begin() + 1, slots.end());
    std::vector<Var> kv_slots(slots.begin(), slots.end() - 1);
    std::vector<Var> shifted = attention_level(tape, q_slots, kv_slots, pair_mask, heads, ncat, head_dim,
                                               true, layer_index, 1, alphas);
    std::vector<Var> out;
    out.reserve(slots.size());
    out.push_back(slots[0]);  // no predecessor: identity
    for (Var v : shifted) out.push_back(v);
    return out;
}

std::vector<Var> hypergraph_layer(Tape& tape, const std::vector<Var>& slots, Var psi,
                                  std::size_t regions, std::size_t ncat, std::size_t dim) {
    Var abs_psi = tape.abs(psi);
    Var deg_edge = tape.rsqrt(tape.clamp_min(tape.sum_over_axis(abs_psi, 1), 1e-8));
    Var deg_region = tape.rsqrt(tape.clamp_min(tape.sum_over_axis(abs_psi, 0), 1e-8));
    Var psi_norm = tape.scale_cols(tape.scale_rows(psi, deg_edge), deg_region);
    Var psi_norm_t = tape.transpose(psi_norm);

    std::vector<Var> out;
    out.reserve(slots.size());
    for (Var slot : slots) {
        // (R*C) x d viewed as R x (C*d): the propagation acts on regions and
        // treats every (category, channel) column independently.
        Var x = tape.reshape(slot, {regions, ncat * dim});
        Var up = tape.relu(tape.matmul(psi_norm, x));
        Var down = tape.relu(tape.matmul(psi_norm_t, up));
        out.push_back(tape.reshape(down, {regions * ncat, dim}));
    }
    return out;
}

ForwardResult forward(Tape& tape, const Tensor& window, const Tensor& a_norm,
                      const Tensor& gamma_norm, const ParamVars& pv, const Hyperparams& hp,
                      OutputMode mode, const ForwardOptions& opts) {
    hp.validate();
    if (window.rank() != 3) throw ShapeError("forward: window must be [R,W,C], got " + shape_str(window.shape));
    const std::size_t regions = window.shape[0], wlen = window.shape[1], ncat = window.shape[2];
    if (a_norm.rank() != 2 || a_norm.rows() != regions || a_norm.cols() != regions)
        throw ShapeError("forward: adjacency shape " + shape_str(a_norm.shape) + " does not match " +
                         std::to_string(regions) + " regions");
    if (!gamma_norm.same_shape(a_norm))
        throw ShapeError("forward: shift adjacency shape mismatch " + shape_str(gamma_norm.shape));
    if (wlen == 0) throw ShapeError("forward: empty window");
    const std::size_t rc = regions * ncat;

    ForwardResult res;
    std::vector<AlphaRecord>* alphas = opts.collect_attention ? &res.alphas : nullptr;

    std::vector<std::vector<Var>> levels;
    levels.push_back(embed_window(tape, window, pv.embed));

    if (hp.spatial_layers > 0) {
        Var mask_a = tape.leaf(expand_pair_mask(a_norm, ncat));
        for (std::size_t l = 0; l < hp.spatial_layers; ++l) {
            std::vector<Var> sp = spatial_layer(tape, levels[l], mask_a, pv.spatial[l], ncat,
                                                hp.head_dim(), l, alphas);
            if (hp.use_hypergraph) {
                std::vector<Var> hg = hypergraph_layer(tape, levels[l], pv.psi, regions, ncat, hp.dim);
                for (std::size_t t = 0; t < wlen; ++t) sp[t] = tape.add(sp[t], hg[t]);
            }
            levels.push_back(std::move(sp));
        }
    }
    if (opts.collect_levels) res.levels = levels;

    // Order-specific embeddings integrate by summation.
    std::vector<Var> summed(wlen);
    for (std::size_t t = 0; t < wlen; ++t) {
        std::vector<Var> terms;
        for (const auto& lv : levels) terms.push_back(lv[t]);
        summed[t] = terms.size() == 1 ? terms[0] : tape.add_n(terms);
    }

    if (hp.temporal_layers > 0) {
        Var mask_g = tape.leaf(expand_pair_mask(gamma_norm, ncat));
        std::vector<std::vector<Var>> tlevels;
        tlevels.push_back(summed);
        for (std::size_t l = 0; l < hp.temporal_layers; ++l)
            tlevels.push_back(temporal_shift_layer(tape, tlevels[l], mask_g, pv.temporal[l], ncat,
                                                   hp.head_dim(), l, alphas));
        for (std::size_t t = 0; t < wlen; ++t) {
            std::vector<Var> terms;
            for (const auto& lv : tlevels) terms.push_back(lv[t]);
            summed[t] = tape.add_n(terms);
        }
    }

    Var lambda = summed.size() == 1 ? summed[0] : tape.add_n(summed);

    // Readout: X_hat[r,c] = phi(w_c . Lambda[r,c]).
    Tensor sel({rc, ncat});
    for (std::size_t r = 0; r < regions; ++r)
        for (std::size_t c = 0; c < ncat; ++c) sel.at(r * ncat + c, c) = 1.0;
    Var w_tiled = tape.matmul(tape.leaf(std::move(sel)), pv.readout);
    res.logits = tape.sum_over_axis(tape.mul(lambda, w_tiled), 1);
    res.output = mode == OutputMode::classification ? tape.sigmoid(res.logits) : res.logits;
    return res;
}

std::vector<std::vector<Tensor>> mean_attention(const Tape& tape,
                                                const std::vector<AlphaRecord>& alphas,
                                                const Tensor& base_mask, bool temporal,
                                                std::size_t layers, std::size_t heads,
                                                std::size_t regions, std::size_t ncat) {
    std::vector<std::vector<Tensor>> means(layers);
    std::vector<std::vector<std::size_t>> counts(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        means[l].assign(heads, Tensor({ncat, ncat}));
        counts[l].assign(heads, 0);
    }
    std::size_t edges = 0;
    for (std::size_t i = 0; i < regions; ++i)
        for (std::size_t j = 0; j < regions; ++j)
            if (base_mask.at(i, j) != 0.0) ++edges;
    for (const AlphaRecord& rec : alphas) {
        if (rec.temporal != temporal) continue;
        const Tensor& alpha = tape.value(rec.alpha);
        Tensor& acc = means[rec.layer][rec.head];
        for (std::size_t i = 0; i < regions; ++i)
            for (std::size_t j = 0; j < regions; ++j) {
                if (base_mask.at(i, j) == 0.0) continue;
                for (std::size_t ci = 0; ci < ncat; ++ci)
                    for (std::size_t cj = 0; cj < ncat; ++cj)
                        acc.at(ci, cj) += alpha.at(i * ncat + ci, j * ncat + cj);
            }
        counts[rec.layer][rec.head] += edges;
    }
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t h = 0; h < heads; ++h)
            if (counts[l][h] > 0)
                for (double& v : means[l][h].data) v /= static_cast<double>(counts[l][h]);
    return means;
}

void export_relevance(const Tape& tape, const ForwardResult& result, const Tensor& a_norm,
                      const Tensor& gamma_norm, const ModelParams& params,
                      const std::vector<std::string>& categories, const std::string& out_dir) {
    const Hyperparams& hp = params.hyper();
    const std::size_t regions = params.regions(), ncat = params.ncat();
    std::filesystem::create_directories(out_dir);

    auto write_layers = [&](const std::vector<std::vector<Tensor>>& means, const std::string& stem) {
        for (std::size_t l = 0; l < means.size(); ++l) {
            const std::string path = out_dir + "/" + stem + std::to_string(l) + ".csv";
            std::FILE* f = std::fopen(path.c_str(), "w");
            if (!f) throw IoError("cannot open for writing: " + path);
            std::fprintf(f, "head,c_target,c_source,mean_alpha\n");
            for (std::size_t h = 0; h < means[l].size(); ++h)
                for (std::size_t ci = 0; ci < ncat; ++ci)
                    for (std::size_t cj = 0; cj < ncat; ++cj)
                        std::fprintf(f, "%zu,%s,%s,%.17g\n", h, categories[ci].c_str(),
                                     categories[cj].c_str(), means[l][h].at(ci, cj));
            std::fclose(f);
        }
    };

    write_layers(mean_attention(tape, result.alphas, a_norm, false, hp.spatial_layers, hp.heads,
                                regions, ncat),
                 "attention_spatial_l");
    write_layers(mean_attention(tape, result.alphas, gamma_norm, true, hp.temporal_layers, hp.heads,
                                regions, ncat),
                 "attention_temporal_l");

    const Tensor& psi = params.find("hyper.psi");
    const std::string path = out_dir + "/hyperedge_incidence.csv";
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::fprintf(f, "hyperedge,region,psi\n");
    for (std::size_t e = 0; e < psi.rows(); ++e)
        for (std::size_t r = 0; r < psi.cols(); ++r) std::fprintf(f, "%zu,%zu,%.17g\n", e, r, psi.at(e, r));
    std::fclose(f);
}

}  // namespace stshn

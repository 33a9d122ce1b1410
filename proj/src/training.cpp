#include "stshn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "stshn/errors.hpp"
#include "stshn/evaluation.hpp"
#include "stshn/graphs.hpp"
#include "stshn/rng.hpp"

namespace stshn {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("decay must be in (0, 1]");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

Tensor window_slice(const Tensor& xn, std::size_t wlen, std::size_t target) {
    if (xn.rank() != 3) throw ShapeError("window_slice: expected [R,T,C], got " + shape_str(xn.shape));
    const std::size_t regions = xn.shape[0], slots = xn.shape[1], ncat = xn.shape[2];
    if (target < wlen || target >= slots)
        throw ShapeError("window_slice: target " + std::to_string(target) + " outside [" +
                         std::to_string(wlen) + ", " + std::to_string(slots) + ")");
    Tensor out({regions, wlen, ncat});
    for (std::size_t r = 0; r < regions; ++r)
        std::copy_n(xn.data.data() + (r * slots + target - wlen) * ncat, wlen * ncat,
                    out.data.data() + r * wlen * ncat);
    return out;
}

namespace {

Var weight_decay_term(Tape& tape, const std::vector<Var>& params, double lambda) {
    std::vector<Var> sums;
    sums.reserve(params.size());
    for (Var p : params) sums.push_back(tape.sum_all(tape.mul(p, p)));
    return tape.scale(tape.add_n(sums), lambda);
}

}  // namespace

Var loss_classification(Tape& tape, Var probabilities, const std::vector<std::uint32_t>& target_counts,
                        const std::vector<Var>& params, double lambda) {
    const Tensor& probs = tape.value(probabilities);
    if (probs.numel() != target_counts.size())
        throw ShapeError("loss: " + std::to_string(probs.numel()) + " predictions vs " +
                         std::to_string(target_counts.size()) + " targets");
    Tensor pos({target_counts.size()}), neg({target_counts.size()});
    for (std::size_t i = 0; i < target_counts.size(); ++i) {
        pos.data[i] = target_counts[i] > 0 ? 1.0 : 0.0;
        neg.data[i] = 1.0 - pos.data[i];
    }
    Var clamped = tape.clamp(probabilities, 1e-7, 1.0 - 1e-7);
    Var pos_term = tape.mul(tape.leaf(std::move(pos)), tape.log(clamped));
    Var neg_term = tape.mul(tape.leaf(std::move(neg)),
                            tape.log(tape.add_scalar(tape.scale(clamped, -1.0), 1.0)));
    Var data_term = tape.scale(tape.add(tape.sum_all(pos_term), tape.sum_all(neg_term)), -1.0);
    if (lambda == 0.0 || params.empty()) return data_term;
    return tape.add(data_term, weight_decay_term(tape, params, lambda));
}

Var loss_regression(Tape& tape, Var predictions, const std::vector<double>& target_normalized,
                    const std::vector<Var>& params, double lambda) {
    const Tensor& preds = tape.value(predictions);
    if (preds.numel() != target_normalized.size())
        throw ShapeError("loss: " + std::to_string(preds.numel()) + " predictions vs " +
                         std::to_string(target_normalized.size()) + " targets");
    Tensor target({target_normalized.size()});
    target.data = target_normalized;
    Var diff = tape.sub(predictions, tape.leaf(std::move(target)));
    Var data_term = tape.sum_all(tape.mul(diff, diff));
    if (lambda == 0.0 || params.empty()) return data_term;
    return tape.add(data_term, weight_decay_term(tape, params, lambda));
}

AdamState AdamState::init(const ModelParams& params) {
    AdamState st;
    for (const NamedTensor& e : params.entries()) {
        st.m.push_back(Tensor(e.value.shape));
        st.v.push_back(Tensor(e.value.shape));
    }
    return st;
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    auto& entries = params.entries();
    if (grads.size() != entries.size() || state.m.size() != entries.size())
        throw ShapeError("adam_step: gradient/state arity mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < entries.size(); ++p) {
        Tensor& theta = entries[p].value;
        if (!grads[p].same_shape(theta))
            throw ShapeError("adam_step: gradient shape mismatch for " + entries[p].name);
        for (std::size_t i = 0; i < theta.numel(); ++i) {
            const double g = grads[p].data[i];
            double& m = state.m[p].data[i];
            double& v = state.v[p].data[i];
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            theta.data[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
        }
    }
}

TrainResult train(const CrimeTensor& data, const WindowSplit& windows, const Hyperparams& hp,
                  const TrainConfig& cfg, std::size_t window_len) {
    cfg.validate();
    hp.validate();
    if (windows.train.empty()) throw DataError("training: no training windows");

    const Tensor xn = normalize(data);
    const RegionGraph rg = build_region_graph(data.grid_rows, data.grid_cols, hp.scale);
    const ShiftGraph sg = build_shift_graph(rg);

    TrainResult res;
    res.params = ModelParams::init(hp, data.regions, data.ncat, cfg.seed);
    AdamState adam = AdamState::init(res.params);

    const bool cls = cfg.mode == OutputMode::classification;
    double best_metric = cls ? -1.0 : std::numeric_limits<double>::infinity();
    res.best_epoch = cfg.epochs == 0 ? 0 : cfg.epochs - 1;
    ModelParams best_params;
    bool have_best = false;

    std::vector<std::size_t> order = windows.train;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate * std::pow(cfg.decay, static_cast<double>(epoch));
        // seeded Fisher-Yates, independent of library shuffle internals
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = counter_hash(cfg.seed, 0x51u, epoch, i) % i;
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        for (std::size_t step = 0; step < order.size(); ++step) {
            const std::size_t target = order[step];
            Tape tape;
            ParamVars pv = bind_params(tape, res.params);
            const Tensor window = window_slice(xn, window_len, target);
            ForwardResult fr = forward(tape, window, rg.normalized, sg.normalized, pv, hp, cfg.mode);

            Var loss;
            if (cls) {
                std::vector<std::uint32_t> target_counts(data.regions * data.ncat);
                for (std::size_t r = 0; r < data.regions; ++r)
                    for (std::size_t c = 0; c < data.ncat; ++c)
                        target_counts[r * data.ncat + c] = data.at(r, target, c);
                loss = loss_classification(tape, fr.output, target_counts, pv.flat, cfg.weight_decay);
            } else {
                std::vector<double> target_norm(data.regions * data.ncat);
                for (std::size_t r = 0; r < data.regions; ++r)
                    for (std::size_t c = 0; c < data.ncat; ++c)
                        target_norm[r * data.ncat + c] =
                            (data.at(r, target, c) - data.mu[c]) / data.sigma[c];
                loss = loss_regression(tape, fr.output, target_norm, pv.flat, cfg.weight_decay);
            }
            const double loss_value = tape.value(loss).data[0];
            if (!std::isfinite(loss_value))
                throw Error(ErrorCode::generic, "training diverged: non-finite loss at epoch " +
                                                    std::to_string(epoch) + ", step " + std::to_string(step));
            loss_sum += loss_value;

            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(pv.flat.size());
            for (Var p : pv.flat) grads.push_back(tape.grad(p));
            adam_step(res.params, grads, adam, lr);
        }

        EpochRecord rec;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        if (!windows.val.empty()) {
            const MetricsReport val =
                evaluate_model(data, xn, window_len, windows.val, res.params, rg.normalized,
                               sg.normalized, cfg.mode);
            rec.val_metric = cls ? val.macro_f1 : val.mae;
            const bool improved = cls ? rec.val_metric > best_metric : rec.val_metric < best_metric;
            if (improved) {
                best_metric = rec.val_metric;
                res.best_epoch = epoch;
                best_params = res.params;
                have_best = true;
            }
        } else {
            rec.val_metric = std::numeric_limits<double>::quiet_NaN();
        }
        res.history.push_back(rec);
    }

    if (have_best) res.params = std::move(best_params);
    return res;
}

namespace {

void write_param(std::FILE* f, const NamedTensor& e) {
    std::fprintf(f, "param %s %zu", e.name.c_str(), e.value.rank());
    for (std::size_t d : e.value.shape) std::fprintf(f, " %zu", d);
    std::fprintf(f, "\n");
    const std::size_t cols = e.value.rank() == 2 ? e.value.cols() : e.value.numel();
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
        std::fprintf(f, "%.17g", e.value.data[i]);
        std::fputc((i + 1) % cols == 0 ? '\n' : ' ', f);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    const Hyperparams& hp = params.hyper();
    std::fprintf(f, "stshn-ckpt v1\n");
    std::fprintf(f, "meta dim %zu\n", hp.dim);
    std::fprintf(f, "meta heads %zu\n", hp.heads);
    std::fprintf(f, "meta spatial_layers %zu\n", hp.spatial_layers);
    std::fprintf(f, "meta temporal_layers %zu\n", hp.temporal_layers);
    std::fprintf(f, "meta hyperedges %zu\n", hp.hyperedges);
    std::fprintf(f, "meta scale %zu\n", hp.scale);
    std::fprintf(f, "meta use_hypergraph %d\n", hp.use_hypergraph ? 1 : 0);
    std::fprintf(f, "meta regions %zu\n", params.regions());
    std::fprintf(f, "meta ncat %zu\n", params.ncat());
    for (const NamedTensor& e : params.entries()) write_param(f, e);
    std::fclose(f);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "stshn-ckpt v1")
        throw DataError("checkpoint version mismatch: expected 'stshn-ckpt v1'");

    Hyperparams hp;
    std::size_t regions = 0, ncat = 0;
    std::streampos params_start = in.tellg();
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string kind, key;
        ls >> kind;
        if (kind != "meta") break;
        std::size_t value = 0;
        if (!(ls >> key >> value)) throw DataError("checkpoint: bad meta line '" + line + "'");
        if (key == "dim")
            hp.dim = value;
        else if (key == "heads")
            hp.heads = value;
        else if (key == "spatial_layers")
            hp.spatial_layers = value;
        else if (key == "temporal_layers")
            hp.temporal_layers = value;
        else if (key == "hyperedges")
            hp.hyperedges = value;
        else if (key == "scale")
            hp.scale = value;
        else if (key == "use_hypergraph")
            hp.use_hypergraph = value != 0;
        else if (key == "regions")
            regions = value;
        else if (key == "ncat")
            ncat = value;
        else
            throw DataError("checkpoint: unknown meta key '" + key + "'");
        params_start = in.tellg();
    }
    in.clear();
    in.seekg(params_start);

    ModelParams params = make_params_shell(hp, regions, ncat);
    for (NamedTensor& e : params.entries()) {
        if (!std::getline(in, line)) throw DataError("checkpoint truncated: missing record for " + e.name);
        std::istringstream ls(line);
        std::string kind, name;
        std::size_t rank = 0;
        if (!(ls >> kind >> name >> rank) || kind != "param")
            throw DataError("checkpoint: expected 'param " + e.name + "', got '" + line + "'");
        if (name != e.name)
            throw ShapeError("checkpoint: parameter order mismatch, expected " + e.name + ", got " + name);
        std::vector<std::size_t> shape(rank);
        for (std::size_t& d : shape)
            if (!(ls >> d)) throw DataError("checkpoint: bad shape for " + name);
        if (shape != e.value.shape)
            throw ShapeError("checkpoint: shape " + shape_str(shape) + " for " + name +
                             " does not match expected " + shape_str(e.value.shape));
        for (std::size_t i = 0; i < e.value.numel(); ++i)
            if (!(in >> e.value.data[i])) throw DataError("checkpoint truncated: values of " + name);
        std::getline(in, line);  // consume end of the last value row
    }
    return params;
}

}  // namespace stshn

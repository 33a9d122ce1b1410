#include "stshn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "stshn/errors.hpp"
#include "stshn/training.hpp"

namespace stshn {

double f1_from(const ConfusionCounts& c) {
    const double denom = 2.0 * c.tp + c.fp + c.fn;
    if (denom == 0.0) return 0.0;
    return 2.0 * static_cast<double>(c.tp) / denom;
}

namespace {

std::vector<ConfusionCounts> confusion_per_category(const std::vector<std::uint8_t>& pred,
                                                    const std::vector<std::uint8_t>& truth,
                                                    std::size_t ncat) {
    if (pred.size() != truth.size())
        throw ShapeError("confusion: prediction length " + std::to_string(pred.size()) +
                         " vs truth length " + std::to_string(truth.size()));
    if (ncat == 0 || pred.size() % ncat != 0)
        throw ShapeError("confusion: length not a multiple of category count");
    std::vector<ConfusionCounts> conf(ncat);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ConfusionCounts& c = conf[i % ncat];
        if (pred[i] && truth[i])
            ++c.tp;
        else if (pred[i] && !truth[i])
            ++c.fp;
        else if (!pred[i] && truth[i])
            ++c.fn;
    }
    return conf;
}

}  // namespace

std::vector<double> f1_per_category(const std::vector<std::uint8_t>& pred,
                                    const std::vector<std::uint8_t>& truth, std::size_t ncat) {
    std::vector<double> out;
    for (const ConfusionCounts& c : confusion_per_category(pred, truth, ncat)) out.push_back(f1_from(c));
    return out;
}

std::pair<double, double> micro_macro_f1(const std::vector<std::uint8_t>& pred,
                                         const std::vector<std::uint8_t>& truth, std::size_t ncat) {
    const auto conf = confusion_per_category(pred, truth, ncat);
    ConfusionCounts pooled;
    double macro = 0.0;
    for (const ConfusionCounts& c : conf) {
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.fn += c.fn;
        macro += f1_from(c);
    }
    macro /= static_cast<double>(ncat);
    return {f1_from(pooled), macro};
}

MaeMape mae_mape(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size()) throw ShapeError("mae_mape: length mismatch");
    if (pred.empty()) throw ShapeError("mae_mape: empty input");
    MaeMape out;
    double abs_sum = 0.0, pct_sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double err = std::fabs(pred[i] - truth[i]);
        abs_sum += err;
        if (truth[i] > 0.0) {
            pct_sum += err / truth[i];
            ++out.mape_cells;
        }
    }
    out.mae = abs_sum / static_cast<double>(pred.size());
    if (out.mape_cells > 0) {
        out.mape = pct_sum / static_cast<double>(out.mape_cells);
        out.mape_defined = true;
    }
    return out;
}

HistoricalAverage HistoricalAverage::fit(const CrimeTensor& data,
                                         const std::vector<std::size_t>& targets) {
    if (targets.empty()) throw DataError("historical average: no training slots");
    HistoricalAverage ha;
    ha.regions = data.regions;
    ha.ncat = data.ncat;
    ha.mean_counts.assign(data.regions * data.ncat, 0.0);
    for (std::size_t t : targets)
        for (std::size_t r = 0; r < data.regions; ++r)
            for (std::size_t c = 0; c < data.ncat; ++c) ha.mean_counts[r * data.ncat + c] += data.at(r, t, c);
    for (double& v : ha.mean_counts) v /= static_cast<double>(targets.size());
    return ha;
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["mode"] = mode;
    j["evaluated_windows"] = evaluated_windows;
    j["evaluated_cells"] = evaluated_cells;
    nlohmann::ordered_json percat = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < categories.size(); ++c) percat[categories[c]] = per_category_f1[c];
    j["per_category_f1"] = percat;
    j["micro_f1"] = micro_f1;
    j["macro_f1"] = macro_f1;
    j["mae"] = has_mae ? nlohmann::ordered_json(mae) : nlohmann::ordered_json(nullptr);
    j["mape"] = has_mape ? nlohmann::ordered_json(mape) : nlohmann::ordered_json(nullptr);
    j["mape_cells"] = mape_cells;
    return j.dump(2);
}

void MetricsReport::write_per_category_csv(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::fprintf(f, "category,f1\n");
    for (std::size_t c = 0; c < categories.size(); ++c)
        std::fprintf(f, "%s,%.17g\n", categories[c].c_str(), per_category_f1[c]);
    std::fclose(f);
}

namespace {

std::vector<std::size_t> apply_protocol_cap(const std::vector<std::size_t>& targets,
                                            std::size_t protocol_cap) {
    if (protocol_cap == 0 || targets.size() <= protocol_cap) return targets;
    return std::vector<std::size_t>(targets.begin(), targets.begin() + protocol_cap);
}

MetricsReport score(const CrimeTensor& data, const std::vector<std::size_t>& targets,
                    const std::vector<std::uint8_t>& pred_bin, const std::vector<std::uint8_t>& true_bin,
                    const std::vector<double>& pred_counts, const std::vector<double>& true_counts,
                    OutputMode mode) {
    MetricsReport rep;
    rep.mode = mode == OutputMode::classification ? "classification" : "regression";
    rep.categories = data.categories;
    rep.evaluated_windows = targets.size();
    rep.evaluated_cells = pred_bin.size();
    rep.per_category_f1 = f1_per_category(pred_bin, true_bin, data.ncat);
    std::tie(rep.micro_f1, rep.macro_f1) = micro_macro_f1(pred_bin, true_bin, data.ncat);
    if (mode == OutputMode::regression) {
        const MaeMape mm = mae_mape(pred_counts, true_counts);
        rep.has_mae = true;
        rep.mae = mm.mae;
        rep.has_mape = mm.mape_defined;
        rep.mape = mm.mape;
        rep.mape_cells = mm.mape_cells;
    }
    return rep;
}

}  // namespace

MetricsReport evaluate_model(const CrimeTensor& data, const Tensor& xn, std::size_t window_len,
                             const std::vector<std::size_t>& targets, const ModelParams& params,
                             const Tensor& a_norm, const Tensor& gamma_norm, OutputMode mode,
                             std::size_t protocol_cap) {
    const std::vector<std::size_t> eval_targets = apply_protocol_cap(targets, protocol_cap);
    if (eval_targets.empty()) throw DataError("evaluation: no windows to score");

    std::vector<std::uint8_t> pred_bin, true_bin;
    std::vector<double> pred_counts, true_counts;
    for (std::size_t target : eval_targets) {
        Tape tape;
        ParamVars pv = bind_params(tape, params);
        const Tensor window = window_slice(xn, window_len, target);
        ForwardResult fr = forward(tape, window, a_norm, gamma_norm, pv, params.hyper(), mode);
        const Tensor& out = tape.value(fr.output);
        for (std::size_t r = 0; r < data.regions; ++r)
            for (std::size_t c = 0; c < data.ncat; ++c) {
                const std::size_t i = r * data.ncat + c;
                const std::uint32_t truth = data.at(r, target, c);
                true_bin.push_back(truth > 0 ? 1 : 0);
                if (mode == OutputMode::classification) {
                    pred_bin.push_back(out.data[i] >= 0.5 ? 1 : 0);
                } else {
                    const double denorm = std::max(0.0, out.data[i] * data.sigma[c] + data.mu[c]);
                    pred_counts.push_back(denorm);
                    true_counts.push_back(static_cast<double>(truth));
                    pred_bin.push_back(denorm > 0.5 ? 1 : 0);
                }
            }
    }
    return score(data, eval_targets, pred_bin, true_bin, pred_counts, true_counts, mode);
}

MetricsReport evaluate_baseline(const CrimeTensor& data, const HistoricalAverage& ha,
                                const std::vector<std::size_t>& targets, OutputMode mode,
                                std::size_t protocol_cap) {
    const std::vector<std::size_t> eval_targets = apply_protocol_cap(targets, protocol_cap);
    if (eval_targets.empty()) throw DataError("evaluation: no windows to score");
    if (ha.regions != data.regions || ha.ncat != data.ncat)
        throw ShapeError("baseline shape does not match dataset");

    std::vector<std::uint8_t> pred_bin, true_bin;
    std::vector<double> pred_counts, true_counts;
    for (std::size_t target : eval_targets)
        for (std::size_t r = 0; r < data.regions; ++r)
            for (std::size_t c = 0; c < data.ncat; ++c) {
                const double mean = ha.mean_counts[r * data.ncat + c];
                const std::uint32_t truth = data.at(r, target, c);
                true_bin.push_back(truth > 0 ? 1 : 0);
                pred_bin.push_back(mean > 0.5 ? 1 : 0);
                if (mode == OutputMode::regression) {
                    pred_counts.push_back(mean);
                    true_counts.push_back(static_cast<double>(truth));
                }
            }
    return score(data, eval_targets, pred_bin, true_bin, pred_counts, true_counts, mode);
}

}  // namespace stshn

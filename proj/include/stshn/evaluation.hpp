#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stshn/datapipe.hpp"
#include "stshn/model.hpp"

namespace stshn {

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0;
};

// F1 = 2PR/(P+R), 0 when nothing was predicted or present.
double f1_from(const ConfusionCounts& c);

// Layout: index = cell * ncat + c, pooled over any number of cells.
std::vector<double> f1_per_category(const std::vector<std::uint8_t>& pred,
                                    const std::vector<std::uint8_t>& truth, std::size_t ncat);

// micro: F1 over confusion counts pooled across categories;
// macro: unweighted mean of per-category F1.
std::pair<double, double> micro_macro_f1(const std::vector<std::uint8_t>& pred,
                                         const std::vector<std::uint8_t>& truth, std::size_t ncat);

struct MaeMape {
    double mae = 0.0;
    double mape = 0.0;
    std::size_t mape_cells = 0;  // cells with positive truth; mape undefined when 0
    bool mape_defined = false;
};

MaeMape mae_mape(const std::vector<double>& pred, const std::vector<double>& truth);

// Per-(region, category) mean count over the given target slots. Occurrence
// prediction is mean > 0.5.
struct HistoricalAverage {
    std::size_t regions = 0, ncat = 0;
    std::vector<double> mean_counts;  // region-major (r * ncat + c)

    static HistoricalAverage fit(const CrimeTensor& data, const std::vector<std::size_t>& targets);
};

struct MetricsReport {
    std::string mode;
    std::vector<std::string> categories;
    std::vector<double> per_category_f1;
    double micro_f1 = 0.0, macro_f1 = 0.0;
    bool has_mae = false;
    double mae = 0.0;
    bool has_mape = false;
    double mape = 0.0;
    std::size_t mape_cells = 0;
    std::size_t evaluated_windows = 0, evaluated_cells = 0;

    std::string to_json() const;
    void write_per_category_csv(const std::string& path) const;
};

// Runs the model over the target windows and scores it. Classification mode
// thresholds probabilities at 0.5; regression mode denormalizes (z * sigma +
// mu, clamped at 0) and also reports occurrence F1 from predicted counts >
// 0.5. When protocol_cap > 0 at most that many consecutive targets are
// scored, matching the fixed-length test protocol.
MetricsReport evaluate_model(const CrimeTensor& data, const Tensor& xn, std::size_t window_len,
                             const std::vector<std::size_t>& targets, const ModelParams& params,
                             const Tensor& a_norm, const Tensor& gamma_norm, OutputMode mode,
                             std::size_t protocol_cap = 0);

// Same protocol with the historical-average predictor.
MetricsReport evaluate_baseline(const CrimeTensor& data, const HistoricalAverage& ha,
                                const std::vector<std::size_t>& targets, OutputMode mode,
                                std::size_t protocol_cap = 0);

}  // namespace stshn

#include "stshn/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "stshn/errors.hpp"
#include "stshn/rng.hpp"

namespace stshn {

namespace {
constexpr double kKmPerDegLat = 111.32;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

void SynthSpec::validate() const {
    if (rows == 0 || cols == 0 || slots == 0 || categories.empty())
        throw ConfigError("synth spec: rows, cols, slots and categories must be non-empty");
    if (base_rate < 0.0) throw ConfigError("synth spec: base_rate must be >= 0");
    if (weekly_amplitude < 0.0 || weekly_amplitude > 1.0)
        throw ConfigError("synth spec: weekly_amplitude must be in [0,1]");
    for (const Hotspot& h : hotspots) {
        if (h.row >= rows || h.col >= cols || h.category >= categories.size())
            throw ConfigError("synth spec: hotspot outside grid or category range");
        if (h.multiplier < 0.0) throw ConfigError("synth spec: hotspot multiplier must be >= 0");
    }
    for (const CrossLag& cl : cross_lags) {
        if (cl.source >= categories.size() || cl.target >= categories.size())
            throw ConfigError("synth spec: cross-lag category out of range");
        if (cl.multiplier < 0.0) throw ConfigError("synth spec: cross-lag multiplier must be >= 0");
    }
}

GridSpec SynthSpec::derive_grid() const {
    GridSpec g;
    g.lat_min = lat_min;
    g.lat_max = lat_min + static_cast<double>(rows) * cell_km / kKmPerDegLat;
    const double mid = 0.5 * (g.lat_min + g.lat_max);
    const double dlon = cell_km / (kKmPerDegLat * std::cos(mid * kPi / 180.0));
    g.lon_min = lon_min;
    g.lon_max = lon_min + static_cast<double>(cols) * dlon;
    g.cell_km = cell_km;
    g.slot_hours = slot_hours;
    g.time_origin = time_origin;
    g.time_slots = slots;
    return g;
}

double expected_rate(const SynthSpec& spec, std::size_t row, std::size_t col, std::size_t t,
                     std::size_t category) {
    double rate = spec.base_rate;
    for (const Hotspot& h : spec.hotspots)
        if (h.row == row && h.col == col && h.category == category) rate *= h.multiplier;
    rate *= 1.0 + spec.weekly_amplitude * std::sin(2.0 * kPi * static_cast<double>(t) / 7.0);
    return rate < 0.0 ? 0.0 : rate;
}

CrimeTensor generate(const SynthSpec& spec) {
    spec.validate();
    const GridSpec grid = spec.derive_grid();
    const std::size_t C = spec.categories.size();

    CrimeTensor ct;
    ct.regions = spec.rows * spec.cols;
    ct.slots = spec.slots;
    ct.ncat = C;
    ct.grid_rows = spec.rows;
    ct.grid_cols = spec.cols;
    ct.categories = spec.categories;
    ct.grid = grid;
    ct.time_origin = spec.time_origin;
    ct.counts.assign(ct.regions * ct.slots * C, 0);

    // Slots are generated in order: the t-1 counts feeding the cross-lag
    // boost are already final when slot t is drawn.
    for (std::size_t t = 0; t < spec.slots; ++t) {
        for (std::size_t r = 0; r < ct.regions; ++r) {
            for (std::size_t c = 0; c < C; ++c) {
                double rate = expected_rate(spec, r / spec.cols, r % spec.cols, t, c);
                if (t > 0) {
                    for (const CrossLag& cl : spec.cross_lags)
                        if (cl.target == c && ct.at(r, t - 1, cl.source) > 0) rate *= cl.multiplier;
                }
                const double u = counter_uniform(spec.seed, r, t, c);
                ct.at(r, t, c) = poisson_inverse_cdf(rate, u);
            }
        }
    }
    ct.finalize_stats();
    return ct;
}

void write_events_csv(const CrimeTensor& ct, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::fprintf(f, "category,timestamp,lat,lon\n");

    const double dlat = (ct.grid.lat_max - ct.grid.lat_min) / static_cast<double>(ct.grid_rows);
    const double dlon = (ct.grid.lon_max - ct.grid.lon_min) / static_cast<double>(ct.grid_cols);
    const std::int64_t slot_sec = ct.grid.slot_seconds();

    for (std::size_t r = 0; r < ct.regions; ++r) {
        const double lat = ct.grid.lat_min + (static_cast<double>(r / ct.grid_cols) + 0.5) * dlat;
        const double lon = ct.grid.lon_min + (static_cast<double>(r % ct.grid_cols) + 0.5) * dlon;
        for (std::size_t t = 0; t < ct.slots; ++t) {
            for (std::size_t c = 0; c < ct.ncat; ++c) {
                const std::uint32_t n = ct.at(r, t, c);
                for (std::uint32_t i = 0; i < n; ++i) {
                    const std::int64_t ts = ct.time_origin + static_cast<std::int64_t>(t) * slot_sec +
                                            static_cast<std::int64_t>(i + 1) * slot_sec /
                                                (static_cast<std::int64_t>(n) + 1);
                    std::fprintf(f, "%s,%lld,%.10f,%.10f\n", ct.categories[c].c_str(),
                                 static_cast<long long>(ts), lat, lon);
                }
            }
        }
    }
    std::fclose(f);
}

namespace {

nlohmann::ordered_json spec_to_json(const SynthSpec& spec) {
    nlohmann::ordered_json j;
    j["rows"] = spec.rows;
    j["cols"] = spec.cols;
    j["slots"] = spec.slots;
    j["categories"] = spec.categories;
    j["seed"] = spec.seed;
    j["base_rate"] = spec.base_rate;
    j["weekly_amplitude"] = spec.weekly_amplitude;
    j["hotspots"] = nlohmann::ordered_json::array();
    for (const Hotspot& h : spec.hotspots)
        j["hotspots"].push_back({{"row", h.row}, {"col", h.col}, {"category", h.category},
                                 {"multiplier", h.multiplier}});
    j["cross_lags"] = nlohmann::ordered_json::array();
    for (const CrossLag& cl : spec.cross_lags)
        j["cross_lags"].push_back({{"source", cl.source}, {"target", cl.target}, {"multiplier", cl.multiplier}});
    j["lat_min"] = spec.lat_min;
    j["lon_min"] = spec.lon_min;
    j["cell_km"] = spec.cell_km;
    j["slot_hours"] = spec.slot_hours;
    j["time_origin"] = spec.time_origin;
    return j;
}

}  // namespace

void write_sidecar(const SynthSpec& spec, const CrimeTensor& ct, const std::string& path) {
    nlohmann::ordered_json j = spec_to_json(spec);
    j["derived_grid"] = {{"lat_max", ct.grid.lat_max}, {"lon_max", ct.grid.lon_max},
                         {"rows", ct.grid_rows},       {"cols", ct.grid_cols},
                         {"time_origin", ct.time_origin}, {"slots", ct.slots}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

void save_synth_spec(const SynthSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << spec_to_json(spec).dump(2) << "\n";
}

SynthSpec load_synth_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open synth spec: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("synth spec " + path + ": " + e.what());
    }
    SynthSpec spec;
    try {
        if (j.contains("rows")) spec.rows = j["rows"].get<std::size_t>();
        if (j.contains("cols")) spec.cols = j["cols"].get<std::size_t>();
        if (j.contains("slots")) spec.slots = j["slots"].get<std::size_t>();
        if (j.contains("categories")) spec.categories = j["categories"].get<std::vector<std::string>>();
        if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("base_rate")) spec.base_rate = j["base_rate"].get<double>();
        if (j.contains("weekly_amplitude")) spec.weekly_amplitude = j["weekly_amplitude"].get<double>();
        if (j.contains("hotspots"))
            for (const auto& h : j["hotspots"])
                spec.hotspots.push_back({h["row"].get<std::size_t>(), h["col"].get<std::size_t>(),
                                         h["category"].get<std::size_t>(), h["multiplier"].get<double>()});
        if (j.contains("cross_lags"))
            for (const auto& cl : j["cross_lags"])
                spec.cross_lags.push_back({cl["source"].get<std::size_t>(), cl["target"].get<std::size_t>(),
                                           cl["multiplier"].get<double>()});
        if (j.contains("lat_min")) spec.lat_min = j["lat_min"].get<double>();
        if (j.contains("lon_min")) spec.lon_min = j["lon_min"].get<double>();
        if (j.contains("cell_km")) spec.cell_km = j["cell_km"].get<double>();
        if (j.contains("slot_hours")) spec.slot_hours = j["slot_hours"].get<double>();
        if (j.contains("time_origin")) spec.time_origin = j["time_origin"].get<std::int64_t>();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("synth spec " + path + ": " + e.what());
    }
    spec.validate();
    return spec;
}

}  // namespace stshn

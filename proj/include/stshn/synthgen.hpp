#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stshn/datapipe.hpp"

namespace stshn {

struct Hotspot {
    std::size_t row = 0, col = 0, category = 0;
    double multiplier = 1.0;
};

struct CrossLag {
    std::size_t source = 0, target = 0;
    double multiplier = 1.0;  // applied when the source category fired in the same cell one slot earlier
};

// Synthetic event stream with planted spatial (hotspots), temporal (weekly
// sinusoid) and cross-category (lag-1) structure. Counts come from
// inverse-CDF Poisson draws on the counter generator, so a spec+seed yields
// the same tensor everywhere.
struct SynthSpec {
    std::size_t rows = 6, cols = 6;
    std::size_t slots = 400;
    std::vector<std::string> categories = {"c0", "c1"};
    std::uint64_t seed = 1;
    double base_rate = 0.1;
    double weekly_amplitude = 0.0;  // rate factor (1 + a * sin(2*pi*t/7))
    std::vector<Hotspot> hotspots;
    std::vector<CrossLag> cross_lags;

    // Anchor for CSV emission; the derived grid reproduces rows/cols exactly.
    double lat_min = 40.0, lon_min = -74.0;
    double cell_km = 3.0, slot_hours = 24.0;
    std::int64_t time_origin = 1577836800;  // 2020-01-01T00:00:00Z

    void validate() const;
    GridSpec derive_grid() const;
};

CrimeTensor generate(const SynthSpec& spec);

// Closed-form expected count for one cell, ignoring the cross-lag boost
// (used by rate-calibration checks).
double expected_rate(const SynthSpec& spec, std::size_t row, std::size_t col, std::size_t t,
                     std::size_t category);

// Events as ingestible CSV (cell centres, slot-interior timestamps) plus a
// JSON sidecar recording the spec and the derived grid.
void write_events_csv(const CrimeTensor& ct, const std::string& path);
void write_sidecar(const SynthSpec& spec, const CrimeTensor& ct, const std::string& path);

SynthSpec load_synth_spec(const std::string& path);
void save_synth_spec(const SynthSpec& spec, const std::string& path);

}  // namespace stshn

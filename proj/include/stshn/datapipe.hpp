#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stshn/tensor.hpp"

namespace stshn {

struct EventRecord {
    std::string category;
    std::int64_t timestamp = 0;  // seconds since epoch, UTC
    double lat = 0.0;
    double lon = 0.0;
};

// Grid partition of the bounding box. Cell extents in degrees are derived
// from cell_km with 1 deg latitude ~ 111.32 km and 1 deg longitude ~
// 111.32 * cos(mid latitude) km. time_origin/time_slots pin the slot axis
// explicitly; left at their defaults, both are derived from the data.
struct GridSpec {
    double lat_min = 0.0, lat_max = 0.0;
    double lon_min = 0.0, lon_max = 0.0;
    double cell_km = 3.0;
    double slot_hours = 24.0;
    std::int64_t time_origin = kAutoOrigin;
    std::size_t time_slots = 0;  // 0 = derive from data

    static constexpr std::int64_t kAutoOrigin = INT64_MIN;

    void validate() const;
    std::size_t rows() const;
    std::size_t cols() const;
    std::int64_t slot_seconds() const { return static_cast<std::int64_t>(slot_hours * 3600.0); }
};

// Event counts on the (region, slot, category) lattice plus the per-category
// statistics used for normalization.
struct CrimeTensor {
    std::size_t regions = 0, slots = 0, ncat = 0;
    std::size_t grid_rows = 0, grid_cols = 0;
    std::vector<std::string> categories;
    GridSpec grid;
    std::int64_t time_origin = 0;
    std::vector<std::uint32_t> counts;  // row-major [R][T][C]
    std::vector<double> mu, sigma;      // length C
    std::vector<std::uint8_t> degenerate;  // 1 where sigma was clamped to 1

    std::uint32_t at(std::size_t r, std::size_t t, std::size_t c) const {
        return counts[(r * slots + t) * ncat + c];
    }
    std::uint32_t& at(std::size_t r, std::size_t t, std::size_t c) {
        return counts[(r * slots + t) * ncat + c];
    }
    // Population mean/std per category over all R*T entries; a zero std is
    // clamped to 1 and flagged so normalization stays total.
    void finalize_stats();
};

struct IngestStats {
    std::size_t rows_read = 0;
    std::size_t events_counted = 0;
    std::size_t skipped_outside_box = 0;
    std::size_t skipped_category = 0;
    std::size_t skipped_outside_time = 0;
};

struct IngestResult {
    CrimeTensor tensor;
    IngestStats stats;
};

// CSV columns: category,timestamp,lat,lon. Timestamps are integer epoch
// seconds or ISO-8601 (YYYY-MM-DD[{T| }HH:MM:SS[Z]]), UTC. A leading header
// row equal to the column names is skipped. Out-of-box / unknown-category
// rows are counted in the stats, not fatal; a malformed row is an error
// naming its line number.
IngestResult ingest_csv(const std::string& path, const GridSpec& grid,
                        const std::vector<std::string>& categories);

// Z-scores per category: (count - mu_c) / sigma_c, shape [R,T,C].
Tensor normalize(const CrimeTensor& ct);

std::vector<std::uint8_t> binarize(const std::vector<std::uint32_t>& counts);

// Sliding windows with chronological split. Each window predicts target slot
// t from input slots [t-W, t). Test takes the last ceil(n/(train+test))
// targets; validation the last min(30, span/10) targets of the remaining
// span; train the rest.
struct WindowSplit {
    std::size_t window_len = 0;
    std::vector<std::size_t> train, val, test;  // target slot indices, ascending
};

WindowSplit make_windows(const CrimeTensor& ct, std::size_t window_len, unsigned ratio_train = 7,
                         unsigned ratio_test = 1);

// Tensor cache: text header (shape, grid, categories, mu/sigma with 17
// significant digits) followed by counts as little-endian u32, row-major.
void save_tensor_cache(const CrimeTensor& ct, const std::string& path);
CrimeTensor load_tensor_cache(const std::string& path);

std::int64_t parse_timestamp(const std::string& text);  // epoch or ISO-8601

}  // namespace stshn

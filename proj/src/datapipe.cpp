#include "stshn/datapipe.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stshn/errors.hpp"

namespace stshn {

namespace {

constexpr double kKmPerDegLat = 111.32;
constexpr double kPi = 3.14159265358979323846;

std::size_t cell_count(double extent_deg, double cell_deg) {
    // Tiny slack so an extent that is an exact multiple of the cell width
    // does not round up to an extra row.
    return static_cast<std::size_t>(std::ceil(extent_deg / cell_deg - 1e-9));
}

double lat_cell_deg(const GridSpec& g) { return g.cell_km / kKmPerDegLat; }

double lon_cell_deg(const GridSpec& g) {
    const double mid = 0.5 * (g.lat_min + g.lat_max);
    return g.cell_km / (kKmPerDegLat * std::cos(mid * kPi / 180.0));
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// Days since 1970-01-01 for a proleptic Gregorian civil date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool all_digits(const std::string& s, std::size_t from) {
    if (from >= s.size()) return false;
    for (std::size_t i = from; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

}  // namespace

void GridSpec::validate() const {
    if (!(lat_min < lat_max) || !(lon_min < lon_max))
        throw ConfigError("grid bounding box is empty or inverted");
    if (!(cell_km > 0.0)) throw ConfigError("cell_km must be positive");
    if (!(slot_hours > 0.0)) throw ConfigError("slot_hours must be positive");
    if (lat_min < -90.0 || lat_max > 90.0 || lon_min < -180.0 || lon_max > 180.0)
        throw ConfigError("grid bounding box outside valid lat/lon range");
}

std::size_t GridSpec::rows() const { return cell_count(lat_max - lat_min, lat_cell_deg(*this)); }
std::size_t GridSpec::cols() const { return cell_count(lon_max - lon_min, lon_cell_deg(*this)); }

std::int64_t parse_timestamp(const std::string& text) {
    std::string s = text;
    // Integer epoch seconds, possibly negative.
    if (all_digits(s, s.size() > 0 && s[0] == '-' ? 1 : 0)) {
        errno = 0;
        char* end = nullptr;
        const long long v = std::strtoll(s.c_str(), &end, 10);
        if (errno != 0 || end != s.c_str() + s.size()) throw DataError("bad epoch timestamp '" + text + "'");
        return static_cast<std::int64_t>(v);
    }
    // ISO-8601: YYYY-MM-DD, optional T or space, HH:MM:SS, optional Z.
    int y = 0;
    unsigned mo = 0, d = 0, hh = 0, mi = 0, ss = 0;
    char sep = 0;
    int n = std::sscanf(s.c_str(), "%d-%u-%u%c%u:%u:%u", &y, &mo, &d, &sep, &hh, &mi, &ss);
    const bool date_only = (n == 3);
    if (!date_only) {
        if (n != 7 || (sep != 'T' && sep != ' ')) throw DataError("bad timestamp '" + text + "'");
        if (s.size() > 0 && s.back() != 'Z' && !std::isdigit(static_cast<unsigned char>(s.back())))
            throw DataError("bad timestamp '" + text + "'");
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || hh > 23 || mi > 59 || ss > 60)
        throw DataError("timestamp fields out of range in '" + text + "'");
    return days_from_civil(y, mo, d) * 86400 + static_cast<std::int64_t>(hh) * 3600 + mi * 60 + ss;
}

void CrimeTensor::finalize_stats() {
    mu.assign(ncat, 0.0);
    sigma.assign(ncat, 0.0);
    degenerate.assign(ncat, 0);
    const double n = static_cast<double>(regions * slots);
    for (std::size_t c = 0; c < ncat; ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < regions; ++r)
            for (std::size_t t = 0; t < slots; ++t) sum += at(r, t, c);
        mu[c] = sum / n;
        double sq = 0.0;
        for (std::size_t r = 0; r < regions; ++r)
            for (std::size_t t = 0; t < slots; ++t) {
                const double dlt = at(r, t, c) - mu[c];
                sq += dlt * dlt;
            }
        sigma[c] = std::sqrt(sq / n);
        if (sigma[c] == 0.0) {
            sigma[c] = 1.0;
            degenerate[c] = 1;
        }
    }
}

IngestResult ingest_csv(const std::string& path, const GridSpec& grid,
                        const std::vector<std::string>& categories) {
    grid.validate();
    if (categories.empty()) throw ConfigError("ingest: category list must be non-empty");

    std::ifstream in(path);
    if (!in) throw IoError("cannot open csv: " + path);

    const std::size_t rows = grid.rows(), cols = grid.cols();
    const double dlat = lat_cell_deg(grid), dlon = lon_cell_deg(grid);
    const std::int64_t slot_sec = grid.slot_seconds();

    struct Parsed {
        std::size_t region, cat;
        std::int64_t ts;
    };
    std::vector<Parsed> events;
    IngestStats stats;

    std::string line;
    std::size_t line_no = 0;
    std::int64_t ts_min = 0, ts_max = 0;
    bool have_ts = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && line == "category,timestamp,lat,lon") continue;

        std::array<std::string, 4> field;
        std::size_t start = 0, fi = 0;
        for (; fi < 4; ++fi) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                if (fi != 3) break;
                field[fi] = line.substr(start);
                start = line.size();
            } else {
                if (fi == 3) break;  // too many columns
                field[fi] = line.substr(start, comma - start);
                start = comma + 1;
            }
        }
        if (fi != 4)
            throw DataError("csv line " + std::to_string(line_no) + ": expected 4 columns 'category,timestamp,lat,lon'");

        ++stats.rows_read;
        std::int64_t ts;
        double lat, lon;
        try {
            ts = parse_timestamp(field[1]);
            std::size_t used = 0;
            lat = std::stod(field[2], &used);
            if (used != field[2].size()) throw DataError("trailing junk");
            lon = std::stod(field[3], &used);
            if (used != field[3].size()) throw DataError("trailing junk");
        } catch (const std::exception& e) {
            throw DataError("csv line " + std::to_string(line_no) + ": " + e.what());
        }
        if (lat < -90.0 || lat > 90.0 || lon < -180.0 || lon > 180.0)
            throw DataError("csv line " + std::to_string(line_no) + ": coordinates out of range");

        const auto cat_it = std::find(categories.begin(), categories.end(), field[0]);
        if (cat_it == categories.end()) {
            ++stats.skipped_category;
            continue;
        }
        if (lat < grid.lat_min || lat > grid.lat_max || lon < grid.lon_min || lon > grid.lon_max) {
            ++stats.skipped_outside_box;
            continue;
        }
        const std::size_t row =
            std::min(static_cast<std::size_t>(std::floor((lat - grid.lat_min) / dlat)), rows - 1);
        const std::size_t col =
            std::min(static_cast<std::size_t>(std::floor((lon - grid.lon_min) / dlon)), cols - 1);
        events.push_back({row * cols + col, static_cast<std::size_t>(cat_it - categories.begin()), ts});
        if (!have_ts || ts < ts_min) ts_min = ts;
        if (!have_ts || ts > ts_max) ts_max = ts;
        have_ts = true;
    }

    std::int64_t origin;
    std::size_t slots;
    if (grid.time_origin != GridSpec::kAutoOrigin) {
        origin = grid.time_origin;
    } else {
        if (!have_ts) throw DataError("empty dataset: no records inside the bounding box and category list");
        origin = floor_div(ts_min, slot_sec) * slot_sec;
    }
    if (grid.time_slots > 0) {
        slots = grid.time_slots;
    } else {
        if (!have_ts) throw DataError("empty dataset: no records inside the bounding box and category list");
        slots = static_cast<std::size_t>(floor_div(ts_max - origin, slot_sec)) + 1;
    }

    CrimeTensor ct;
    ct.regions = rows * cols;
    ct.slots = slots;
    ct.ncat = categories.size();
    ct.grid_rows = rows;
    ct.grid_cols = cols;
    ct.categories = categories;
    ct.grid = grid;
    ct.time_origin = origin;
    ct.counts.assign(ct.regions * ct.slots * ct.ncat, 0);

    std::size_t counted = 0;
    for (const Parsed& ev : events) {
        const std::int64_t slot = floor_div(ev.ts - origin, slot_sec);
        if (slot < 0 || slot >= static_cast<std::int64_t>(slots)) {
            ++stats.skipped_outside_time;
            continue;
        }
        ++ct.at(ev.region, static_cast<std::size_t>(slot), ev.cat);
        ++counted;
    }
    stats.events_counted = counted;
    if (counted == 0) throw DataError("empty dataset: no records inside the bounding box and category list");

    ct.finalize_stats();
    return {std::move(ct), stats};
}

Tensor normalize(const CrimeTensor& ct) {
    Tensor out({ct.regions, ct.slots, ct.ncat});
    for (std::size_t r = 0; r < ct.regions; ++r)
        for (std::size_t t = 0; t < ct.slots; ++t)
            for (std::size_t c = 0; c < ct.ncat; ++c)
                out.data[(r * ct.slots + t) * ct.ncat + c] = (ct.at(r, t, c) - ct.mu[c]) / ct.sigma[c];
    return out;
}

std::vector<std::uint8_t> binarize(const std::vector<std::uint32_t>& counts) {
    std::vector<std::uint8_t> out(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = counts[i] > 0 ? 1 : 0;
    return out;
}

WindowSplit make_windows(const CrimeTensor& ct, std::size_t window_len, unsigned ratio_train,
                         unsigned ratio_test) {
    if (window_len == 0) throw ConfigError("window length must be >= 1");
    if (ratio_train == 0 || ratio_test == 0) throw ConfigError("split ratio parts must be positive");
    if (ct.slots < window_len + 1)
        throw DataError("series too short: need at least " + std::to_string(window_len + 1) +
                        " slots for window length " + std::to_string(window_len) + ", have " +
                        std::to_string(ct.slots));

    const std::size_t n_windows = ct.slots - window_len;
    const unsigned parts = ratio_train + ratio_test;
    const std::size_t n_test = (n_windows * ratio_test + parts - 1) / parts;  // ceil
    const std::size_t span = n_windows - n_test;
    const std::size_t n_val = std::min<std::size_t>(30, span / 10);
    const std::size_t n_train = span - n_val;

    WindowSplit ws;
    ws.window_len = window_len;
    for (std::size_t k = 0; k < n_windows; ++k) {
        const std::size_t target = window_len + k;
        if (k < n_train)
            ws.train.push_back(target);
        else if (k < n_train + n_val)
            ws.val.push_back(target);
        else
            ws.test.push_back(target);
    }
    return ws;
}

void save_tensor_cache(const CrimeTensor& ct, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::fprintf(f, "stshn-tensor v1\n");
    std::fprintf(f, "shape %zu %zu %zu\n", ct.regions, ct.slots, ct.ncat);
    std::fprintf(f, "grid_dims %zu %zu\n", ct.grid_rows, ct.grid_cols);
    std::fprintf(f, "grid %.17g %.17g %.17g %.17g %.17g %.17g\n", ct.grid.lat_min, ct.grid.lat_max,
                 ct.grid.lon_min, ct.grid.lon_max, ct.grid.cell_km, ct.grid.slot_hours);
    std::fprintf(f, "time_origin %lld\n", static_cast<long long>(ct.time_origin));
    for (const std::string& c : ct.categories) std::fprintf(f, "category %s\n", c.c_str());
    std::fprintf(f, "mu");
    for (double v : ct.mu) std::fprintf(f, " %.17g", v);
    std::fprintf(f, "\nsigma");
    for (double v : ct.sigma) std::fprintf(f, " %.17g", v);
    std::fprintf(f, "\ndegenerate");
    for (std::uint8_t v : ct.degenerate) std::fprintf(f, " %u", v);
    std::fprintf(f, "\ndata\n");
    for (std::uint32_t v : ct.counts) {
        unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                              static_cast<unsigned char>((v >> 16) & 0xFF),
                              static_cast<unsigned char>((v >> 24) & 0xFF)};
        if (std::fwrite(b, 1, 4, f) != 4) {
            std::fclose(f);
            throw IoError("short write to " + path);
        }
    }
    std::fclose(f);
}

CrimeTensor load_tensor_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open tensor cache: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "stshn-tensor v1")
        throw DataError("tensor cache version mismatch: expected 'stshn-tensor v1'");

    CrimeTensor ct;
    bool have_shape = false;
    while (std::getline(in, line)) {
        if (line == "data") break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "shape") {
            if (!(ls >> ct.regions >> ct.slots >> ct.ncat)) throw DataError("tensor cache: bad shape line");
            have_shape = true;
        } else if (key == "grid_dims") {
            if (!(ls >> ct.grid_rows >> ct.grid_cols)) throw DataError("tensor cache: bad grid_dims line");
        } else if (key == "grid") {
            if (!(ls >> ct.grid.lat_min >> ct.grid.lat_max >> ct.grid.lon_min >> ct.grid.lon_max >>
                  ct.grid.cell_km >> ct.grid.slot_hours))
                throw DataError("tensor cache: bad grid line");
        } else if (key == "time_origin") {
            long long v = 0;
            if (!(ls >> v)) throw DataError("tensor cache: bad time_origin line");
            ct.time_origin = v;
        } else if (key == "category") {
            std::string rest;
            std::getline(ls, rest);
            if (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
            if (rest.empty()) throw DataError("tensor cache: empty category name");
            ct.categories.push_back(rest);
        } else if (key == "mu") {
            double v;
            while (ls >> v) ct.mu.push_back(v);
        } else if (key == "sigma") {
            double v;
            while (ls >> v) ct.sigma.push_back(v);
        } else if (key == "degenerate") {
            unsigned v;
            while (ls >> v) ct.degenerate.push_back(static_cast<std::uint8_t>(v));
        } else {
            throw DataError("tensor cache: unknown header key '" + key + "'");
        }
    }
    if (!have_shape || line != "data") throw DataError("tensor cache: truncated header in " + path);
    if (ct.categories.size() != ct.ncat || ct.mu.size() != ct.ncat || ct.sigma.size() != ct.ncat)
        throw DataError("tensor cache: category/statistics arity does not match shape");

    const std::size_t n = ct.regions * ct.slots * ct.ncat;
    ct.counts.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (in.gcount() != 4) throw DataError("tensor cache: truncated data section in " + path);
        ct.counts[i] = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                       (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    if (ct.degenerate.size() != ct.ncat) ct.degenerate.assign(ct.ncat, 0);
    return ct;
}

}  // namespace stshn

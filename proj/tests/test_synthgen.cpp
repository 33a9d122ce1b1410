#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "stshn/datapipe.hpp"
#include "stshn/errors.hpp"
#include "stshn/synthgen.hpp"

using namespace stshn;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("sg_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("zero base rate gives the all-zero tensor") {
    SynthSpec spec;
    spec.rows = 2;
    spec.cols = 2;
    spec.slots = 12;
    spec.base_rate = 0.0;
    const CrimeTensor ct = generate(spec);
    for (std::uint32_t v : ct.counts) CHECK(v == 0);
    CHECK(ct.degenerate == std::vector<std::uint8_t>{1, 1});
}

TEST_CASE("same seed reproduces the tensor bit for bit") {
    SynthSpec spec;
    spec.rows = 3;
    spec.cols = 4;
    spec.slots = 50;
    spec.base_rate = 0.4;
    spec.weekly_amplitude = 0.5;
    spec.hotspots = {{1, 2, 0, 6.0}};
    spec.cross_lags = {{0, 1, 3.0}};
    spec.seed = 42;
    const CrimeTensor a = generate(spec);
    const CrimeTensor b = generate(spec);
    CHECK(a.counts == b.counts);

    spec.seed = 43;
    const CrimeTensor c = generate(spec);
    CHECK(a.counts != c.counts);
}

TEST_CASE("hotspot empirical mean within 15% of the analytic rate") {
    SynthSpec spec;
    spec.rows = 2;
    spec.cols = 2;
    spec.slots = 400;
    spec.base_rate = 0.1;
    spec.hotspots = {{0, 0, 0, 10.0}};
    spec.seed = 7;
    const CrimeTensor ct = generate(spec);

    double total = 0.0, analytic = 0.0;
    for (std::size_t t = 0; t < spec.slots; ++t) {
        total += ct.at(0, t, 0);
        analytic += expected_rate(spec, 0, 0, t, 0);
    }
    CHECK(std::fabs(total - analytic) <= 0.15 * analytic);

    // plain cell stays near the base rate
    double plain = 0.0;
    for (std::size_t t = 0; t < spec.slots; ++t) plain += ct.at(3, t, 0);
    CHECK(std::fabs(plain - spec.base_rate * spec.slots) <= 0.15 * spec.base_rate * spec.slots + 3.0);
}

TEST_CASE("raising the base rate never lowers expected activity") {
    SynthSpec lo;
    lo.rows = 3;
    lo.cols = 3;
    lo.slots = 300;
    lo.base_rate = 0.2;
    lo.seed = 11;
    SynthSpec hi = lo;
    hi.base_rate = 0.6;
    const CrimeTensor a = generate(lo);
    const CrimeTensor b = generate(hi);
    double ta = 0.0, tb = 0.0;
    for (std::uint32_t v : a.counts) ta += v;
    for (std::uint32_t v : b.counts) tb += v;
    CHECK(tb > ta);
}

TEST_CASE("cross-lag boosts the target category after source fires") {
    SynthSpec spec;
    spec.rows = 1;
    spec.cols = 1;
    spec.slots = 2000;
    spec.base_rate = 0.3;
    spec.cross_lags = {{0, 1, 5.0}};
    spec.seed = 3;
    const CrimeTensor ct = generate(spec);

    double boosted = 0.0, quiet = 0.0;
    std::size_t nb = 0, nq = 0;
    for (std::size_t t = 1; t < spec.slots; ++t) {
        if (ct.at(0, t - 1, 0) > 0) {
            boosted += ct.at(0, t, 1);
            ++nb;
        } else {
            quiet += ct.at(0, t, 1);
            ++nq;
        }
    }
    REQUIRE(nb > 50);
    REQUIRE(nq > 50);
    CHECK(boosted / nb > 2.0 * (quiet / nq));
}

TEST_CASE("csv emission round-trips to the identical tensor via the sidecar grid") {
    SynthSpec spec;
    spec.rows = 3;
    spec.cols = 3;
    spec.slots = 30;
    spec.base_rate = 0.5;
    spec.hotspots = {{0, 0, 0, 4.0}};
    spec.seed = 19;
    const CrimeTensor ct = generate(spec);

    TempFile csv("events.csv");
    write_events_csv(ct, csv.path);

    const GridSpec grid = spec.derive_grid();
    CHECK(grid.rows() == spec.rows);
    CHECK(grid.cols() == spec.cols);
    const IngestResult back = ingest_csv(csv.path, grid, spec.categories);
    CHECK(back.tensor.counts == ct.counts);
    CHECK(back.tensor.slots == ct.slots);
    CHECK(back.stats.skipped_outside_box == 0);
    CHECK(back.stats.skipped_outside_time == 0);
}

TEST_CASE("spec json round trip") {
    SynthSpec spec;
    spec.rows = 4;
    spec.cols = 5;
    spec.slots = 77;
    spec.categories = {"theft", "assault", "damage"};
    spec.seed = 23;
    spec.base_rate = 0.12;
    spec.weekly_amplitude = 0.4;
    spec.hotspots = {{1, 1, 0, 9.0}, {3, 4, 2, 5.0}};
    spec.cross_lags = {{0, 2, 2.5}};

    TempFile js("spec.json");
    save_synth_spec(spec, js.path);
    const SynthSpec back = load_synth_spec(js.path);
    CHECK(back.rows == spec.rows);
    CHECK(back.cols == spec.cols);
    CHECK(back.slots == spec.slots);
    CHECK(back.categories == spec.categories);
    CHECK(back.seed == spec.seed);
    CHECK(back.base_rate == spec.base_rate);
    CHECK(back.hotspots.size() == 2);
    CHECK(back.cross_lags.size() == 1);
    CHECK(generate(back).counts == generate(spec).counts);
}

TEST_CASE("invalid specs are rejected") {
    SynthSpec spec;
    spec.hotspots = {{9, 0, 0, 1.0}};  // row outside a 6x6 grid? rows=6 so row 9 invalid
    CHECK_THROWS_AS(generate(spec), ConfigError);
    SynthSpec neg;
    neg.base_rate = -0.5;
    CHECK_THROWS_AS(generate(neg), ConfigError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "stshn/errors.hpp"
#include "stshn/evaluation.hpp"
#include "stshn/graphs.hpp"
#include "stshn/rng.hpp"
#include "stshn/synthgen.hpp"
#include "stshn/training.hpp"

using namespace stshn;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("tr_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = lo + (hi - lo) * counter_uniform(seed, i);
    return t;
}

// scalar-loop references
double bce_oracle(const std::vector<double>& probs, const std::vector<std::uint32_t>& counts,
                  const std::vector<Tensor>& params, double lambda) {
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double p = probs[i];
        p = p < 1e-7 ? 1e-7 : (p > 1.0 - 1e-7 ? 1.0 - 1e-7 : p);
        if (counts[i] > 0)
            loss -= std::log(p);
        else
            loss -= std::log(1.0 - p);
    }
    for (const Tensor& t : params)
        for (double v : t.data) loss += lambda * v * v;
    return loss;
}

double sq_oracle(const std::vector<double>& pred, const std::vector<double>& target,
                 const std::vector<Tensor>& params, double lambda) {
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) loss += (pred[i] - target[i]) * (pred[i] - target[i]);
    for (const Tensor& t : params)
        for (double v : t.data) loss += lambda * v * v;
    return loss;
}

CrimeTensor pattern_tensor() {
    // cell 0 always active, cell 1 never: fully memorizable
    CrimeTensor ct;
    ct.regions = 2;
    ct.slots = 14;
    ct.ncat = 1;
    ct.grid_rows = 1;
    ct.grid_cols = 2;
    ct.categories = {"a"};
    ct.counts.assign(ct.regions * ct.slots, 0);
    for (std::size_t t = 0; t < ct.slots; ++t) ct.at(0, t, 0) = 1;
    ct.finalize_stats();
    return ct;
}

Hyperparams tiny_hyper() {
    Hyperparams hp;
    hp.dim = 4;
    hp.heads = 2;
    hp.spatial_layers = 1;
    hp.temporal_layers = 1;
    hp.hyperedges = 2;
    return hp;
}

}  // namespace

TEST_CASE("classification loss: forced values") {
    Tape t;
    Var half = t.leaf(Tensor({1}, {0.5}));
    Var loss = loss_classification(t, half, {1}, {}, 0.0);
    CHECK(t.value(loss).data[0] == doctest::Approx(0.6931471805599453).epsilon(1e-12));

    // confident and correct: loss bounded by the clamp
    Tape t2;
    Var sure = t2.leaf(Tensor({2}, {1.0, 0.0}));
    Var l2 = loss_classification(t2, sure, {3, 0}, {}, 0.0);
    CHECK(t2.value(l2).data[0] <= 2.0 * std::log(1.0 / (1.0 - 1e-7)) + 1e-12);
    CHECK(t2.value(l2).data[0] >= 0.0);
}

TEST_CASE("classification loss matches the scalar loop on random instances") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t n = 12;
        Tape t;
        Tensor probs({n});
        std::vector<std::uint32_t> counts(n);
        for (std::size_t i = 0; i < n; ++i) {
            probs.data[i] = counter_uniform(seed, i, 0);
            counts[i] = counter_uniform(seed, i, 1) < 0.4 ? 1 + i % 3 : 0;
        }
        const Tensor p1 = random_tensor({3, 2}, 900 + seed);
        const Tensor p2 = random_tensor({4}, 950 + seed);
        Var v1 = t.leaf(p1), v2 = t.leaf(p2);
        const double lambda = seed % 2 ? 1e-3 : 0.0;
        Var loss = loss_classification(t, t.leaf(probs), counts, {v1, v2}, lambda);
        const double expect = bce_oracle(probs.data, counts, {p1, p2}, lambda);
        CHECK(t.value(loss).data[0] == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("regression loss: forced values and scalar loop") {
    Tape t;
    Var same = t.leaf(Tensor({3}, {1, 2, 3}));
    CHECK(t.value(loss_regression(t, same, {1, 2, 3}, {}, 0.0)).data[0] == 0.0);

    Var off = t.leaf(Tensor({1}, {5.0}));
    CHECK(t.value(loss_regression(t, off, {3.0}, {}, 0.0)).data[0] == 4.0);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Tape tt;
        const std::size_t n = 9;
        Tensor pred({n});
        std::vector<double> target(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred.data[i] = 4.0 * counter_uniform(seed, i, 5) - 2.0;
            target[i] = 4.0 * counter_uniform(seed, i, 6) - 2.0;
        }
        const Tensor p1 = random_tensor({2, 3}, 970 + seed);
        const double lambda = seed % 2 ? 1e-2 : 0.0;
        Var loss = loss_regression(tt, tt.leaf(pred), target, {tt.leaf(p1)}, lambda);
        CHECK(tt.value(loss).data[0] ==
              doctest::Approx(sq_oracle(pred.data, target, {p1}, lambda)).epsilon(1e-10));
    }
}

TEST_CASE("zero weight decay removes regularization exactly") {
    Tape t;
    Tensor probs({4}, {0.3, 0.6, 0.2, 0.9});
    const std::vector<std::uint32_t> counts = {1, 0, 0, 2};
    const Tensor big = random_tensor({5, 5}, 33, -3.0, 3.0);
    Var with_params = loss_classification(t, t.leaf(probs), counts, {t.leaf(big)}, 0.0);
    Var without = loss_classification(t, t.leaf(probs), counts, {}, 0.0);
    CHECK(t.value(with_params).data[0] == t.value(without).data[0]);
    CHECK(t.value(with_params).data[0] == doctest::Approx(bce_oracle(probs.data, counts, {}, 0.0)));
}

TEST_CASE("adam: zero gradient leaves parameters in place") {
    Hyperparams hp = tiny_hyper();
    ModelParams params = ModelParams::init(hp, 2, 1, 7);
    const ModelParams before = params;
    AdamState st = AdamState::init(params);
    std::vector<Tensor> grads;
    for (const auto& e : params.entries()) grads.push_back(Tensor(e.value.shape));
    adam_step(params, grads, st, 0.1);
    for (std::size_t p = 0; p < params.entries().size(); ++p)
        CHECK(params.entries()[p].value.data == before.entries()[p].value.data);
    CHECK(st.step == 1);
}

TEST_CASE("adam: first-step magnitude is the learning rate") {
    Hyperparams hp = tiny_hyper();
    ModelParams params = ModelParams::init(hp, 2, 1, 8);
    const ModelParams before = params;
    AdamState st = AdamState::init(params);
    std::vector<Tensor> grads;
    for (const auto& e : params.entries()) {
        Tensor g(e.value.shape);
        for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] = 0.7 + counter_uniform(9, i);  // nonzero
        grads.push_back(g);
    }
    const double lr = 0.01;
    adam_step(params, grads, st, lr);
    for (std::size_t p = 0; p < params.entries().size(); ++p)
        for (std::size_t i = 0; i < params.entries()[p].value.numel(); ++i) {
            const double delta = before.entries()[p].value.data[i] - params.entries()[p].value.data[i];
            CHECK(std::fabs(std::fabs(delta) - lr) <= 1e-6);
        }
}

TEST_CASE("adam: ten steps descend a convex quadratic") {
    // f(x) = sum (x - 3)^2
    Tensor x({4}, {10.0, -5.0, 0.0, 7.0});
    ModelParams fake;  // use adam_step via a scratch ModelParams-like shell
    Hyperparams hp = tiny_hyper();
    (void)hp;
    // drive Adam directly on a single named tensor
    struct Mini {
        Tensor m, v;
        std::size_t step = 0;
    } st{Tensor({4}), Tensor({4}), 0};
    auto f = [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data) s += (v - 3.0) * (v - 3.0);
        return s;
    };
    double prev = f(x);
    for (int it = 0; it < 10; ++it) {
        ++st.step;
        const double bc1 = 1.0 - std::pow(0.9, st.step), bc2 = 1.0 - std::pow(0.999, st.step);
        for (std::size_t i = 0; i < 4; ++i) {
            const double g = 2.0 * (x.data[i] - 3.0);
            st.m.data[i] = 0.9 * st.m.data[i] + 0.1 * g;
            st.v.data[i] = 0.999 * st.v.data[i] + 0.001 * g * g;
            x.data[i] -= 0.5 * (st.m.data[i] / bc1) / (std::sqrt(st.v.data[i] / bc2) + 1e-8);
        }
        const double cur = f(x);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("train: zero epochs returns the seeded initial parameters") {
    const CrimeTensor data = pattern_tensor();
    const WindowSplit ws = make_windows(data, 3);
    Hyperparams hp = tiny_hyper();
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 21;
    const TrainResult res = train(data, ws, hp, cfg, 3);
    const ModelParams expect = ModelParams::init(hp, data.regions, data.ncat, 21);
    for (std::size_t p = 0; p < expect.entries().size(); ++p)
        CHECK(res.params.entries()[p].value.data == expect.entries()[p].value.data);
    CHECK(res.history.empty());
}

TEST_CASE("train: identical seeds give bit-identical histories and parameters") {
    const CrimeTensor data = pattern_tensor();
    const WindowSplit ws = make_windows(data, 3);
    Hyperparams hp = tiny_hyper();
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 4;
    cfg.learning_rate = 0.01;
    const TrainResult a = train(data, ws, hp, cfg, 3);
    const TrainResult b = train(data, ws, hp, cfg, 3);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].train_loss == b.history[e].train_loss);
        CHECK((std::isnan(a.history[e].val_metric)
                   ? std::isnan(b.history[e].val_metric)
                   : a.history[e].val_metric == b.history[e].val_metric));
    }
    for (std::size_t p = 0; p < a.params.entries().size(); ++p)
        CHECK(a.params.entries()[p].value.data == b.params.entries()[p].value.data);

    TrainConfig other = cfg;
    other.seed = 5;
    const TrainResult c = train(data, ws, hp, other, 3);
    CHECK(a.history[2].train_loss != c.history[2].train_loss);
}

TEST_CASE("train: memorizable pattern drops below 10% of the initial loss") {
    const CrimeTensor data = pattern_tensor();
    const WindowSplit ws = make_windows(data, 3);
    Hyperparams hp = tiny_hyper();
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.decay = 1.0;
    cfg.seed = 2;
    cfg.epochs = 500;
    const TrainResult res = train(data, ws, hp, cfg, 3);
    const double initial = res.history.front().train_loss;
    double best = initial;
    std::size_t best_epoch = 0;
    for (std::size_t e = 0; e < res.history.size(); ++e)
        if (res.history[e].train_loss < best) {
            best = res.history[e].train_loss;
            best_epoch = e;
        }
    INFO("initial ", initial, " best ", best, " at epoch ", best_epoch);
    CHECK(best < 0.1 * initial);
}

TEST_CASE("full-model gradients match finite differences (classification and regression)") {
    // 2 regions, 2 categories, T=3, d=4, H=2, E_h=2
    Hyperparams hp;
    hp.dim = 4;
    hp.heads = 2;
    hp.spatial_layers = 1;
    hp.temporal_layers = 1;
    hp.hyperedges = 2;
    const std::size_t R = 2, C = 2, W = 3;
    const RegionGraph rg = build_region_graph(1, 2, 3);
    const ShiftGraph sg = build_shift_graph(rg);
    const ModelParams mp = ModelParams::init(hp, R, C, 99);
    const Tensor window = random_tensor({R, W, C}, 98, -1.2, 1.2);
    const std::vector<std::uint32_t> counts = {2, 0, 0, 1};
    const std::vector<double> norm_targets = {0.9, -0.3, -0.3, 0.4};

    for (const bool classification : {true, false}) {
        auto f = [&](const std::vector<NamedTensor>& ps, std::vector<Tensor>* grads) {
            ModelParams local = make_params_shell(hp, R, C);
            for (std::size_t p = 0; p < ps.size(); ++p) local.entries()[p].value = ps[p].value;
            Tape tape;
            ParamVars pv = bind_params(tape, local);
            ForwardResult fr =
                forward(tape, window, rg.normalized, sg.normalized, pv, hp,
                        classification ? OutputMode::classification : OutputMode::regression);
            Var loss = classification
                           ? loss_classification(tape, fr.output, counts, pv.flat, 1e-3)
                           : loss_regression(tape, fr.output, norm_targets, pv.flat, 1e-3);
            if (grads) {
                tape.backward(loss);
                for (Var v : pv.flat) grads->push_back(tape.grad(v));
            }
            return tape.value(loss).data[0];
        };
        const auto report = grad_check(f, mp.entries(), 1e-5, 1e-4);
        INFO("mode ", classification ? "cls" : "reg", ": worst ", report.worst_name(), " err ",
             report.worst_err());
        CHECK(report.pass);
    }
}

TEST_CASE("checkpoint round trip preserves parameters and outputs") {
    Hyperparams hp = tiny_hyper();
    hp.temporal_layers = 2;
    const ModelParams mp = ModelParams::init(hp, 4, 2, 55);
    TempFile ck("round.ckpt");
    save_checkpoint(ck.path, mp);
    const ModelParams back = load_checkpoint(ck.path);

    REQUIRE(back.entries().size() == mp.entries().size());
    for (std::size_t p = 0; p < mp.entries().size(); ++p) {
        CHECK(back.entries()[p].name == mp.entries()[p].name);
        for (std::size_t i = 0; i < mp.entries()[p].value.numel(); ++i)
            CHECK(std::fabs(back.entries()[p].value.data[i] - mp.entries()[p].value.data[i]) <= 1e-12);
    }

    const RegionGraph rg = build_region_graph(2, 2, 3);
    const ShiftGraph sg = build_shift_graph(rg);
    const Tensor window = random_tensor({4, 3, 2}, 56);
    Tape t1, t2;
    const ForwardResult f1 = forward(t1, window, rg.normalized, sg.normalized, bind_params(t1, mp), hp,
                                     OutputMode::classification);
    const ForwardResult f2 = forward(t2, window, rg.normalized, sg.normalized, bind_params(t2, back), hp,
                                     OutputMode::classification);
    for (std::size_t i = 0; i < t1.value(f1.output).numel(); ++i)
        CHECK(std::fabs(t1.value(f1.output).data[i] - t2.value(f2.output).data[i]) <= 1e-12);
}

TEST_CASE("checkpoint rejects truncation, bad version and changed shapes") {
    Hyperparams hp = tiny_hyper();
    const ModelParams mp = ModelParams::init(hp, 2, 2, 66);
    TempFile ck("bad.ckpt");
    save_checkpoint(ck.path, mp);

    std::ifstream in(ck.path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    TempFile cut("cut.ckpt");
    std::ofstream(cut.path) << content.substr(0, content.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(cut.path), DataError);

    TempFile ver("ver.ckpt");
    std::ofstream(ver.path) << "stshn-ckpt v2\n" << content.substr(content.find('\n') + 1);
    CHECK_THROWS_WITH_AS(load_checkpoint(ver.path), doctest::Contains("version"), DataError);

    CHECK_THROWS_AS(load_checkpoint("missing.ckpt"), IoError);
}

TEST_CASE("trained model beats the historical average on planted structure") {
    // weekly phase on the first category, lag-only firing on the second: the
    // per-cell mean predictor cannot express either
    SynthSpec spec;
    spec.rows = 4;
    spec.cols = 4;
    spec.slots = 200;
    spec.categories = {"c0", "c1"};
    spec.seed = 551;
    spec.base_rate = 0.1;
    spec.weekly_amplitude = 1.0;
    spec.hotspots = {{0, 0, 0, 15.0}, {1, 2, 0, 15.0}, {3, 3, 0, 15.0}};
    spec.cross_lags = {{0, 1, 6.0}};
    const CrimeTensor data = generate(spec);
    const WindowSplit ws = make_windows(data, 7);

    Hyperparams hp;
    hp.dim = 16;
    hp.heads = 4;
    hp.spatial_layers = 1;
    hp.temporal_layers = 2;
    hp.hyperedges = 8;
    TrainConfig cfg;
    cfg.epochs = 18;
    cfg.learning_rate = 0.01;
    cfg.seed = 31;
    const TrainResult res = train(data, ws, hp, cfg, 7);

    const Tensor xn = normalize(data);
    const RegionGraph rg = build_region_graph(4, 4, 3);
    const ShiftGraph sg = build_shift_graph(rg);
    const MetricsReport model = evaluate_model(data, xn, 7, ws.val, res.params, rg.normalized,
                                               sg.normalized, OutputMode::classification);
    const HistoricalAverage ha = HistoricalAverage::fit(data, ws.train);
    const MetricsReport base = evaluate_baseline(data, ha, ws.val, OutputMode::classification);
    INFO("model macro ", model.macro_f1, " baseline macro ", base.macro_f1);
    CHECK(model.macro_f1 >= base.macro_f1 + 0.05);
}

// Rough timing probe for one training step at various sizes (not a ctest).
#include <chrono>
#include <cstdio>

#include "stshn/graphs.hpp"
#include "stshn/model.hpp"
#include "stshn/rng.hpp"
#include "stshn/training.hpp"

using namespace stshn;

static void bench(std::size_t rows, std::size_t cols, std::size_t C, std::size_t W, Hyperparams hp,
                  const char* label) {
    const std::size_t R = rows * cols;
    const RegionGraph rg = build_region_graph(rows, cols, hp.scale);
    const ShiftGraph sg = build_shift_graph(rg);
    const ModelParams mp = ModelParams::init(hp, R, C, 1);
    Tensor window({R, W, C});
    for (std::size_t i = 0; i < window.numel(); ++i) window.data[i] = counter_uniform(2, i) - 0.3;
    std::vector<std::uint32_t> targets(R * C, 1);

    const auto t0 = std::chrono::steady_clock::now();
    int reps = 3;
    std::size_t nodes = 0;
    for (int rep = 0; rep < reps; ++rep) {
        Tape tape;
        ParamVars pv = bind_params(tape, mp);
        ForwardResult fr = forward(tape, window, rg.normalized, sg.normalized, pv, hp,
                                   OutputMode::classification);
        Var loss = loss_classification(tape, fr.output, targets, pv.flat, 1e-4);
        tape.backward(loss);
        nodes = tape.size();
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
    std::printf("%-28s R=%zu W=%zu: %8.1f ms/step, %zu nodes\n", label, R, W, ms, nodes);
}

int main() {
    Hyperparams def;  // d16 H4 Ls2 Lt7 E128
    bench(6, 6, 2, 30, def, "defaults 6x6 W30");
    Hyperparams lean = def;
    lean.temporal_layers = 3;
    bench(6, 6, 2, 14, lean, "lean Lt3 6x6 W14");
    Hyperparams tiny = def;
    tiny.temporal_layers = 2;
    tiny.hyperedges = 32;
    bench(6, 6, 2, 10, tiny, "tiny Lt2 E32 6x6 W10");
    bench(4, 4, 2, 7, tiny, "tiny 4x4 W7");
    return 0;
}

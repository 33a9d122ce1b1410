#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stshn/config.hpp"
#include "stshn/datapipe.hpp"
#include "stshn/errors.hpp"
#include "stshn/evaluation.hpp"
#include "stshn/graphs.hpp"
#include "stshn/model.hpp"
#include "stshn/synthgen.hpp"
#include "stshn/training.hpp"

namespace {

using namespace stshn;

struct GlobalFlags {
    std::string config_path;
    std::vector<std::string> sets;
    std::string seed;
    std::string mode;
};

RunConfig make_config(const GlobalFlags& g) {
    std::vector<std::string> overrides = g.sets;
    if (!g.seed.empty()) overrides.push_back("seed=" + g.seed);
    if (!g.mode.empty()) overrides.push_back("mode=" + g.mode);
    return load_config(g.config_path, overrides);
}

void apply_sidecar(RunConfig& cfg, const std::string& sidecar_path) {
    std::ifstream in(sidecar_path);
    if (!in) throw IoError("cannot open sidecar: " + sidecar_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("sidecar " + sidecar_path + ": " + e.what());
    }
    if (!j.contains("derived_grid")) throw ConfigError("sidecar missing derived_grid: " + sidecar_path);
    const auto& dg = j["derived_grid"];
    cfg.grid.lat_min = j["lat_min"].get<double>();
    cfg.grid.lon_min = j["lon_min"].get<double>();
    cfg.grid.lat_max = dg["lat_max"].get<double>();
    cfg.grid.lon_max = dg["lon_max"].get<double>();
    cfg.grid.cell_km = j["cell_km"].get<double>();
    cfg.grid.slot_hours = j["slot_hours"].get<double>();
    cfg.grid.time_origin = dg["time_origin"].get<std::int64_t>();
    cfg.grid.time_slots = dg["slots"].get<std::size_t>();
    cfg.categories = j["categories"].get<std::vector<std::string>>();
}

// Checkpoints are self-describing; the dataset must still agree with them.
void check_compatible(const ModelParams& params, const CrimeTensor& data) {
    if (params.regions() != data.regions || params.ncat() != data.ncat)
        throw ShapeError("checkpoint was trained for " + std::to_string(params.regions()) + " regions / " +
                         std::to_string(params.ncat()) + " categories, dataset has " +
                         std::to_string(data.regions) + " / " + std::to_string(data.ncat));
}

std::vector<std::size_t> pick_split(const WindowSplit& ws, const std::string& name) {
    if (name == "train") return ws.train;
    if (name == "val") return ws.val;
    if (name == "test") return ws.test;
    throw ConfigError("unknown split '" + name + "', expected train|val|test");
}

int run(int argc, char** argv) {
    CLI::App app{"Spatial-temporal hypergraph network for grid-based event forecasting"};
    app.require_subcommand(1);

    GlobalFlags g;
    app.add_option("--config", g.config_path, "key=value config file");
    app.add_option("--set", g.sets, "config override key=value (repeatable)");
    app.add_option("--seed", g.seed, "seed override");
    app.add_option("--mode", g.mode, "cls or reg");

    auto* gen = app.add_subcommand("gen", "generate a synthetic event stream");
    std::string gen_spec, gen_out, gen_sidecar, gen_cache;
    gen->add_option("--spec", gen_spec, "synth spec JSON")->required();
    gen->add_option("--out", gen_out, "output events CSV")->required();
    gen->add_option("--sidecar", gen_sidecar, "sidecar JSON path (default: <out>.spec.json)");
    gen->add_option("--cache", gen_cache, "also write the tensor cache here");

    auto* ingest = app.add_subcommand("ingest", "build the tensor cache from an events CSV");
    std::string ing_csv, ing_out, ing_sidecar;
    ingest->add_option("--csv", ing_csv, "events CSV")->required();
    ingest->add_option("--out", ing_out, "tensor cache output")->required();
    ingest->add_option("--sidecar", ing_sidecar, "take grid+categories from a gen sidecar");

    auto* tr = app.add_subcommand("train", "train on a tensor cache");
    std::string tr_data, tr_ckpt;
    tr->add_option("--data", tr_data, "tensor cache")->required();
    tr->add_option("--ckpt", tr_ckpt, "checkpoint output")->required();

    auto* pred = app.add_subcommand("predict", "one-window forecast");
    std::string pr_data, pr_ckpt;
    long long pr_target = -1;
    pred->add_option("--data", pr_data, "tensor cache")->required();
    pred->add_option("--ckpt", pr_ckpt, "checkpoint")->required();
    pred->add_option("--target", pr_target, "target slot (default: one past the last slot)");

    auto* ev = app.add_subcommand("eval", "score a checkpoint on a split");
    std::string ev_data, ev_ckpt, ev_split = "test", ev_csv;
    ev->add_option("--data", ev_data, "tensor cache")->required();
    ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
    ev->add_option("--split", ev_split, "train|val|test (default test)");
    ev->add_option("--csv", ev_csv, "also write per-category F1 CSV here");

    auto* ex = app.add_subcommand("export-relevance", "dump attention and incidence CSVs");
    std::string ex_data, ex_ckpt, ex_out;
    long long ex_target = -1;
    ex->add_option("--data", ex_data, "tensor cache")->required();
    ex->add_option("--ckpt", ex_ckpt, "checkpoint")->required();
    ex->add_option("--out", ex_out, "output directory")->required();
    ex->add_option("--target", ex_target, "window target slot (default: last slot)");

    auto* dc = app.add_subcommand("print-config", "print every config key with its default");

    CLI11_PARSE(app, argc, argv);

    if (dc->parsed()) {
        std::fputs(default_config_text().c_str(), stdout);
        return 0;
    }

    RunConfig cfg = make_config(g);

    if (gen->parsed()) {
        const SynthSpec spec = load_synth_spec(gen_spec);
        const CrimeTensor ct = generate(spec);
        write_events_csv(ct, gen_out);
        write_sidecar(spec, ct, gen_sidecar.empty() ? gen_out + ".spec.json" : gen_sidecar);
        if (!gen_cache.empty()) save_tensor_cache(ct, gen_cache);
        nlohmann::ordered_json j;
        j["regions"] = ct.regions;
        j["slots"] = ct.slots;
        j["categories"] = ct.categories;
        std::size_t total = 0;
        for (std::uint32_t v : ct.counts) total += v;
        j["events"] = total;
        std::printf("%s\n", j.dump().c_str());
        return 0;
    }

    if (ingest->parsed()) {
        if (!ing_sidecar.empty()) apply_sidecar(cfg, ing_sidecar);
        if (cfg.categories.empty())
            throw ConfigError("ingest needs categories (config key 'categories' or --sidecar)");
        const IngestResult res = ingest_csv(ing_csv, cfg.grid, cfg.categories);
        save_tensor_cache(res.tensor, ing_out);
        nlohmann::ordered_json j;
        j["regions"] = res.tensor.regions;
        j["slots"] = res.tensor.slots;
        j["rows_read"] = res.stats.rows_read;
        j["events_counted"] = res.stats.events_counted;
        j["skipped_outside_box"] = res.stats.skipped_outside_box;
        j["skipped_category"] = res.stats.skipped_category;
        j["skipped_outside_time"] = res.stats.skipped_outside_time;
        std::printf("%s\n", j.dump().c_str());
        return 0;
    }

    if (tr->parsed()) {
        const CrimeTensor data = load_tensor_cache(tr_data);
        const WindowSplit ws = make_windows(data, cfg.window, cfg.ratio_train, cfg.ratio_test);
        const TrainResult res = train(data, ws, cfg.hyper, cfg.train, cfg.window);
        save_checkpoint(tr_ckpt, res.params);
        nlohmann::ordered_json j;
        j["epochs"] = res.history.size();
        j["best_epoch"] = res.best_epoch;
        nlohmann::ordered_json hist = nlohmann::ordered_json::array();
        for (const EpochRecord& r : res.history) {
            nlohmann::ordered_json h;
            h["train_loss"] = r.train_loss;
            if (std::isnan(r.val_metric))
                h["val_metric"] = nullptr;
            else
                h["val_metric"] = r.val_metric;
            hist.push_back(h);
        }
        j["history"] = hist;
        std::printf("%s\n", j.dump(2).c_str());
        return 0;
    }

    if (pred->parsed()) {
        const CrimeTensor data = load_tensor_cache(pr_data);
        const ModelParams params = load_checkpoint(pr_ckpt);
        check_compatible(params, data);
        const std::size_t target = pr_target < 0 ? data.slots : static_cast<std::size_t>(pr_target);
        if (target < cfg.window || target > data.slots)
            throw ConfigError("target slot must be in [" + std::to_string(cfg.window) + ", " +
                              std::to_string(data.slots) + "]");
        Tensor xn = normalize(data);
        // A target of data.slots forecasts one step past the series end.
        const RegionGraph rg = build_region_graph(data.grid_rows, data.grid_cols, params.hyper().scale);
        const ShiftGraph sg = build_shift_graph(rg);
        Tape tape;
        ParamVars pv = bind_params(tape, params);
        Tensor window({data.regions, cfg.window, data.ncat});
        for (std::size_t r = 0; r < data.regions; ++r)
            for (std::size_t t = 0; t < cfg.window; ++t)
                for (std::size_t c = 0; c < data.ncat; ++c)
                    window.data[(r * cfg.window + t) * data.ncat + c] =
                        xn.data[(r * data.slots + target - cfg.window + t) * data.ncat + c];
        const ForwardResult fr =
            forward(tape, window, rg.normalized, sg.normalized, pv, params.hyper(), cfg.train.mode);
        const Tensor& out = tape.value(fr.output);
        nlohmann::ordered_json j;
        j["mode"] = cfg.train.mode == OutputMode::classification ? "classification" : "regression";
        j["target_slot"] = target;
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (std::size_t r = 0; r < data.regions; ++r) {
            nlohmann::ordered_json row;
            row["region"] = r;
            for (std::size_t c = 0; c < data.ncat; ++c) {
                double v = out.data[r * data.ncat + c];
                if (cfg.train.mode == OutputMode::regression)
                    v = std::max(0.0, v * data.sigma[c] + data.mu[c]);
                row[data.categories[c]] = v;
            }
            rows.push_back(row);
        }
        j["predictions"] = rows;
        std::printf("%s\n", j.dump(2).c_str());
        return 0;
    }

    if (ev->parsed()) {
        const CrimeTensor data = load_tensor_cache(ev_data);
        const ModelParams params = load_checkpoint(ev_ckpt);
        check_compatible(params, data);
        const WindowSplit ws = make_windows(data, cfg.window, cfg.ratio_train, cfg.ratio_test);
        const std::vector<std::size_t> targets = pick_split(ws, ev_split);
        const Tensor xn = normalize(data);
        const RegionGraph rg = build_region_graph(data.grid_rows, data.grid_cols, params.hyper().scale);
        const ShiftGraph sg = build_shift_graph(rg);
        const MetricsReport rep = evaluate_model(data, xn, cfg.window, targets, params, rg.normalized,
                                                 sg.normalized, cfg.train.mode, cfg.protocol_cap);
        if (!ev_csv.empty()) rep.write_per_category_csv(ev_csv);
        std::printf("%s\n", rep.to_json().c_str());
        return 0;
    }

    if (ex->parsed()) {
        const CrimeTensor data = load_tensor_cache(ex_data);
        const ModelParams params = load_checkpoint(ex_ckpt);
        check_compatible(params, data);
        const std::size_t target = ex_target < 0 ? data.slots : static_cast<std::size_t>(ex_target);
        if (target < cfg.window || target > data.slots)
            throw ConfigError("target slot must be in [" + std::to_string(cfg.window) + ", " +
                              std::to_string(data.slots) + "]");
        Tensor xn = normalize(data);
        const RegionGraph rg = build_region_graph(data.grid_rows, data.grid_cols, params.hyper().scale);
        const ShiftGraph sg = build_shift_graph(rg);
        Tape tape;
        ParamVars pv = bind_params(tape, params);
        Tensor window({data.regions, cfg.window, data.ncat});
        for (std::size_t r = 0; r < data.regions; ++r)
            for (std::size_t t = 0; t < cfg.window; ++t)
                for (std::size_t c = 0; c < data.ncat; ++c)
                    window.data[(r * cfg.window + t) * data.ncat + c] =
                        xn.data[(r * data.slots + target - cfg.window + t) * data.ncat + c];
        ForwardOptions opts;
        opts.collect_attention = true;
        const ForwardResult fr = forward(tape, window, rg.normalized, sg.normalized, pv, params.hyper(),
                                         cfg.train.mode, opts);
        export_relevance(tape, fr, rg.adjacency, sg.adjacency, params, data.categories, ex_out);
        std::printf("{\"exported\":\"%s\"}\n", ex_out.c_str());
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const stshn::Error& e) {
        nlohmann::ordered_json j;
        j["error"] = {{"code", static_cast<int>(e.code())}, {"message", e.what()}};
        std::fprintf(stderr, "%s\n", j.dump().c_str());
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        nlohmann::ordered_json j;
        j["error"] = {{"code", 1}, {"message", e.what()}};
        std::fprintf(stderr, "%s\n", j.dump().c_str());
        return 1;
    }
}

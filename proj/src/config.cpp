#include "stshn/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "stshn/errors.hpp"

namespace stshn {

namespace {

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    }
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    const long long x = parse_int(key, v);
    if (x < 0) throw ConfigError("config: " + key + " must be non-negative");
    return static_cast<std::size_t>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "dim")
        hyper.dim = parse_size(key, value);
    else if (key == "heads")
        hyper.heads = parse_size(key, value);
    else if (key == "spatial_layers")
        hyper.spatial_layers = parse_size(key, value);
    else if (key == "temporal_layers")
        hyper.temporal_layers = parse_size(key, value);
    else if (key == "hyperedges")
        hyper.hyperedges = parse_size(key, value);
    else if (key == "scale")
        hyper.scale = parse_size(key, value);
    else if (key == "use_hypergraph")
        hyper.use_hypergraph = parse_bool(key, value);
    else if (key == "mode") {
        if (value == "cls" || value == "classification")
            train.mode = OutputMode::classification;
        else if (value == "reg" || value == "regression")
            train.mode = OutputMode::regression;
        else
            throw ConfigError("config: mode must be cls or reg, got '" + value + "'");
    } else if (key == "epochs")
        train.epochs = parse_size(key, value);
    else if (key == "learning_rate")
        train.learning_rate = parse_double(key, value);
    else if (key == "decay")
        train.decay = parse_double(key, value);
    else if (key == "weight_decay")
        train.weight_decay = parse_double(key, value);
    else if (key == "seed")
        train.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "window")
        window = parse_size(key, value);
    else if (key == "ratio_train")
        ratio_train = static_cast<unsigned>(parse_size(key, value));
    else if (key == "ratio_test")
        ratio_test = static_cast<unsigned>(parse_size(key, value));
    else if (key == "protocol_cap")
        protocol_cap = parse_size(key, value);
    else if (key == "lat_min")
        grid.lat_min = parse_double(key, value);
    else if (key == "lat_max")
        grid.lat_max = parse_double(key, value);
    else if (key == "lon_min")
        grid.lon_min = parse_double(key, value);
    else if (key == "lon_max")
        grid.lon_max = parse_double(key, value);
    else if (key == "cell_km")
        grid.cell_km = parse_double(key, value);
    else if (key == "slot_hours")
        grid.slot_hours = parse_double(key, value);
    else if (key == "time_origin") {
        if (value == "auto")
            grid.time_origin = GridSpec::kAutoOrigin;
        else
            grid.time_origin = parse_timestamp(value);
    } else if (key == "time_slots")
        grid.time_slots = parse_size(key, value);
    else if (key == "categories") {
        categories = split_commas(value);
        if (categories.empty()) throw ConfigError("config: categories list is empty");
    } else
        throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig config_from_overrides(const std::vector<std::string>& overrides) {
    RunConfig cfg;
    for (const std::string& ov : overrides) {
        const std::size_t eq = ov.find('=');
        if (eq == std::string::npos) throw ConfigError("config: override '" + ov + "' is not key=value");
        cfg.set(ov.substr(0, eq), ov.substr(eq + 1));
    }
    return cfg;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config: " + path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            // trim
            const auto b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos) continue;
            const auto e = line.find_last_not_of(" \t\r");
            line = line.substr(b, e - b + 1);
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config " + path + " line " + std::to_string(line_no) +
                                  ": expected key=value");
            std::string key = line.substr(0, eq), value = line.substr(eq + 1);
            while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
            while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.erase(value.begin());
            try {
                cfg.set(key, value);
            } catch (const ConfigError& err) {
                throw ConfigError(std::string(err.what()) + " (line " + std::to_string(line_no) + " of " +
                                  path + ")");
            }
        }
    }
    for (const std::string& ov : overrides) {
        const std::size_t eq = ov.find('=');
        if (eq == std::string::npos) throw ConfigError("config: override '" + ov + "' is not key=value");
        cfg.set(ov.substr(0, eq), ov.substr(eq + 1));
    }
    return cfg;
}

std::string default_config_text() {
    const RunConfig d;
    std::ostringstream os;
    os << "# model\n";
    os << "dim=" << d.hyper.dim << "\n";
    os << "heads=" << d.hyper.heads << "\n";
    os << "spatial_layers=" << d.hyper.spatial_layers << "\n";
    os << "temporal_layers=" << d.hyper.temporal_layers << "\n";
    os << "hyperedges=" << d.hyper.hyperedges << "\n";
    os << "scale=" << d.hyper.scale << "\n";
    os << "use_hypergraph=" << (d.hyper.use_hypergraph ? "on" : "off") << "\n";
    os << "# training\n";
    os << "mode=cls\n";
    os << "epochs=" << d.train.epochs << "\n";
    os << "learning_rate=" << d.train.learning_rate << "\n";
    os << "decay=" << d.train.decay << "\n";
    os << "weight_decay=" << d.train.weight_decay << "\n";
    os << "seed=" << d.train.seed << "\n";
    os << "window=" << d.window << "\n";
    os << "ratio_train=" << d.ratio_train << "\n";
    os << "ratio_test=" << d.ratio_test << "\n";
    os << "protocol_cap=" << d.protocol_cap << "\n";
    os << "# ingest grid (required for ingest: lat/lon bounds, categories)\n";
    os << "cell_km=" << d.grid.cell_km << "\n";
    os << "slot_hours=" << d.grid.slot_hours << "\n";
    os << "time_origin=auto\n";
    os << "time_slots=0\n";
    return os.str();
}

}  // namespace stshn

#include "gridloc/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace gridloc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("bad value for " + key + ": '" + v + "'");
    return out;
}

int positive_int(const std::string& key, const std::string& v) {
    const int x = parse_number<int>(key, v);
    if (x <= 0) throw ConfigError(key + " must be positive");
    return x;
}

double positive_double(const std::string& key, const std::string& v) {
    const double x = parse_number<double>(key, v);
    if (!(x > 0.0)) throw ConfigError(key + " must be positive");
    return x;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<AttackKind> attack_list(const std::string& key, const std::string& v) {
    std::vector<AttackKind> out;
    try {
        for (const auto& s : split_list(v)) out.push_back(attack_kind_from_string(s));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key + ": " + e.what());
    }
    if (out.empty()) throw ConfigError(key + " must name at least one attack kind");
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s;
}

nlohmann::json attack_names(const std::vector<AttackKind>& v) {
    nlohmann::json j = nlohmann::json::array();
    for (auto k : v) j.push_back(to_string(k));
    return j;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

struct Entry {
    ConfigKey key;
    Setter set;
};

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = [] {
        std::vector<Entry> t;
        auto str = [&](const char* name, const char* help, std::string RunConfig::*field) {
            t.push_back({{name, help}, [field](RunConfig& c, const std::string&, const std::string& v) {
                             if (v.empty()) throw ConfigError(std::string("empty value"));
                             c.*field = v;
                         }});
        };
        auto opt_str = [&](const char* name, const char* help, std::string RunConfig::*field) {
            t.push_back({{name, help}, [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; }});
        };
        auto pint = [&](const char* name, const char* help, int RunConfig::*field) {
            t.push_back({{name, help},
                         [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = positive_int(k, v); }});
        };
        auto pdbl = [&](const char* name, const char* help, double RunConfig::*field) {
            t.push_back({{name, help}, [field](RunConfig& c, const std::string& k, const std::string& v) {
                             c.*field = positive_double(k, v);
                         }});
        };
        str("case", "MATPOWER case file", &RunConfig::case_path);
        str("out", "output directory", &RunConfig::out_dir);
        opt_str("data", "dataset directory (default <out>/data)", &RunConfig::data_dir);
        opt_str("checkpoint", "model checkpoint path (default <out>/model.ckpt)", &RunConfig::checkpoint);
        pint("horizon", "number of 1-minute timestamps", &RunConfig::horizon);
        pdbl("noise_pct", "measurement noise std in percent", &RunConfig::noise_pct);
        pint("region_min", "smallest attacked region", &RunConfig::region_min);
        pint("region_max", "largest attacked region", &RunConfig::region_max);
        pdbl("budget", "optimization attack budget on ||a||, p.u.", &RunConfig::budget);
        pint("attack_steps", "optimization attack ascent steps", &RunConfig::attack_steps);
        t.push_back({{"attacks_train", "attack kinds for train/val splits"},
                     [](RunConfig& c, const std::string& k, const std::string& v) { c.attacks_train = attack_list(k, v); }});
        t.push_back({{"attacks_test", "attack kinds for the test split"},
                     [](RunConfig& c, const std::string& k, const std::string& v) { c.attacks_test = attack_list(k, v); }});
        t.push_back({{"model", "iir, fir or fcn"}, [](RunConfig& c, const std::string& k, const std::string& v) {
                         try {
                             c.model = model_kind_from_string(v);
                         } catch (const std::invalid_argument& e) {
                             throw ConfigError(k + ": " + e.what());
                         }
                     }});
        pint("order", "K: ARMA stacks or FIR order", &RunConfig::order);
        pint("iterations", "T: unrolled ARMA iterations", &RunConfig::iterations);
        pint("layers", "hidden graph layers", &RunConfig::layers);
        pint("channels", "hidden channels", &RunConfig::channels);
        pint("fcn_hidden", "FCN hidden width", &RunConfig::fcn_hidden);
        pdbl("lr", "Adam learning rate", &RunConfig::lr);
        pint("batch_size", "mini-batch size", &RunConfig::batch_size);
        pint("max_epochs", "epoch limit", &RunConfig::max_epochs);
        pint("patience", "epochs without improvement before stopping", &RunConfig::patience);
        t.push_back({{"seed", "base seed"}, [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.seed = parse_number<std::uint64_t>(k, v);
                     }});
        t.push_back({{"threshold", "acceptable F1 threshold"}, [](RunConfig& c, const std::string& k, const std::string& v) {
                         const double x = parse_number<double>(k, v);
                         if (!(x >= 0.0 && x <= 1.0)) throw ConfigError(k + " must lie in [0, 1]");
                         c.threshold = x;
                     }});
        pint("latency_reps", "timed forward passes", &RunConfig::latency_reps);
        t.push_back({{"filters", "filters to fit, e.g. iir3,fir3,fir11,iir5"},
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.filters = split_list(v);
                         if (c.filters.empty()) throw ConfigError(k + " must list at least one filter");
                     }});
        pint("train_signals", "filter experiment training signals", &RunConfig::train_signals);
        pint("val_signals", "filter experiment validation signals", &RunConfig::val_signals);
        pint("probe_signals", "signals used for the empirical response", &RunConfig::probe_signals);
        pint("filter_batch", "filter experiment batch size", &RunConfig::filter_batch);
        pdbl("filter_lr", "filter experiment learning rate", &RunConfig::filter_lr);
        pint("filter_epochs", "filter experiment epoch limit", &RunConfig::filter_epochs);
        t.push_back({{"attack", "attack kind for attack-preview"}, [](RunConfig& c, const std::string& k, const std::string& v) {
                         try {
                             c.attack = attack_kind_from_string(v);
                         } catch (const std::invalid_argument& e) {
                             throw ConfigError(k + ": " + e.what());
                         }
                     }});
        pint("timestamp", "attacked timestamp for attack-preview", &RunConfig::timestamp);
        pint("region_size", "region size for attack-preview", &RunConfig::region_size);
        return t;
    }();
    return table;
}

}  // namespace

std::string RunConfig::resolved_data_dir() const {
    return data_dir.empty() ? (std::filesystem::path(out_dir) / "data").string() : data_dir;
}

std::string RunConfig::resolved_checkpoint() const {
    return checkpoint.empty() ? (std::filesystem::path(out_dir) / "model.ckpt").string() : checkpoint;
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        for (const auto& e : entries()) k.push_back(e.key);
        return k;
    }();
    return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& e : entries()) {
        if (e.key.name == key) {
            e.set(cfg, key, trim(value));
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        try {
            set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void validate_config(const RunConfig& cfg) {
    if (cfg.region_min > cfg.region_max) throw ConfigError("region_min exceeds region_max");
    if (cfg.region_min < 2) throw ConfigError("region_min must be at least 2");
    for (const auto& f : cfg.filters) {
        const bool iir = f.rfind("iir", 0) == 0;
        const bool fir = f.rfind("fir", 0) == 0;
        if ((!iir && !fir) || f.size() == 3) throw ConfigError("bad filter label '" + f + "'");
        positive_int("filters", f.substr(3));
    }
}

nlohmann::json config_to_json(const RunConfig& c) {
    return {{"case", c.case_path},
            {"out", c.out_dir},
            {"data", c.resolved_data_dir()},
            {"checkpoint", c.resolved_checkpoint()},
            {"horizon", c.horizon},
            {"noise_pct", c.noise_pct},
            {"region_min", c.region_min},
            {"region_max", c.region_max},
            {"budget", c.budget},
            {"attack_steps", c.attack_steps},
            {"attacks_train", attack_names(c.attacks_train)},
            {"attacks_test", attack_names(c.attacks_test)},
            {"model", to_string(c.model)},
            {"order", c.order},
            {"iterations", c.iterations},
            {"layers", c.layers},
            {"channels", c.channels},
            {"fcn_hidden", c.fcn_hidden},
            {"lr", c.lr},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"seed", c.seed},
            {"threshold", c.threshold},
            {"latency_reps", c.latency_reps},
            {"filters", join(c.filters)},
            {"train_signals", c.train_signals},
            {"val_signals", c.val_signals},
            {"probe_signals", c.probe_signals},
            {"filter_batch", c.filter_batch},
            {"filter_lr", c.filter_lr},
            {"filter_epochs", c.filter_epochs},
            {"attack", to_string(c.attack)},
            {"timestamp", c.timestamp},
            {"region_size", c.region_size}};
}

ModelConfig model_config(const RunConfig& c) {
    ModelConfig m;
    m.kind = c.model;
    m.graph_layers = c.layers;
    m.channels = c.channels;
    m.order = c.order;
    m.iterations = c.iterations;
    m.fcn_hidden = c.fcn_hidden;
    return m;
}

}  // namespace gridloc

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridloc/attacks.hpp"
#include "gridloc/model.hpp"

namespace gridloc {

/// Every knob of a run. Precedence: command-line flag > config file > default.
struct RunConfig {
    std::string case_path = "data/case14.m";
    std::string out_dir = "out";
    std::string data_dir;    // empty: <out_dir>/data
    std::string checkpoint;  // empty: <out_dir>/model.ckpt

    // dataset
    int horizon = 8640;
    double noise_pct = 1.0;
    int region_min = 2;
    int region_max = 10;
    double budget = 0.1;
    int attack_steps = 50;
    std::vector<AttackKind> attacks_train{AttackKind::Optimization, AttackKind::Distribution};
    std::vector<AttackKind> attacks_test{AttackKind::Replay, AttackKind::Scale, AttackKind::Distribution,
                                         AttackKind::Optimization};

    // model and training
    ModelKind model = ModelKind::Iir;
    int order = 3;
    int iterations = 8;
    int layers = 3;
    int channels = 32;
    int fcn_hidden = 128;
    double lr = 1e-3;
    int batch_size = 256;
    int max_epochs = 256;
    int patience = 16;
    std::uint64_t seed = 42;

    // eval
    double threshold = 0.9;
    int latency_reps = 200;

    // freq-response
    std::vector<std::string> filters{"iir3", "fir3", "fir11", "iir5"};
    int train_signals = 4096;
    int val_signals = 1024;
    int probe_signals = 512;
    int filter_batch = 64;
    double filter_lr = 1e-2;
    int filter_epochs = 256;

    // attack-preview
    AttackKind attack = AttackKind::Optimization;
    int timestamp = 1;
    int region_size = 5;

    [[nodiscard]] std::string resolved_data_dir() const;
    [[nodiscard]] std::string resolved_checkpoint() const;
};

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ConfigKey {
    std::string name;
    std::string help;
};

/// Every settable key, in declaration order.
const std::vector<ConfigKey>& config_keys();

/// Throws ConfigError on an unknown key or an unparsable / non-positive value.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// `key = value` lines; blank lines and `#` comments ignored.
void load_config_file(RunConfig& cfg, const std::string& path);

/// Cross-field checks (region range, filter labels, ...).
void validate_config(const RunConfig& cfg);

nlohmann::json config_to_json(const RunConfig& cfg);

ModelConfig model_config(const RunConfig& cfg);

}  // namespace gridloc

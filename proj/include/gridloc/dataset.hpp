#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridloc/attacks.hpp"
#include "gridloc/powerflow.hpp"
#include "gridloc/train.hpp"

namespace gridloc {

struct LoadProfileConfig {
    double base_level = 1.0;
    double daily_amplitude = 0.15;   // period 1440 min
    double weekly_amplitude = 0.03;  // period 10080 min
    double daily_phase = 0.0;        // rad
    double system_jitter = 0.005;    // AR(1) innovation std
    double ar_coefficient = 0.95;
    double bus_jitter = 0.02;        // independent per-bus std around the system level
};

inline constexpr double kMultiplierMin = 0.7;
inline constexpr double kMultiplierMax = 1.3;
inline constexpr int kMinutesPerDay = 1440;
inline constexpr int kMinutesPerWeek = 10080;

/// One multiplier per (minute, bus). `system` is the shared level before the
/// per-bus jitter.
struct LoadProfile {
    std::vector<double> system;
    Eigen::MatrixXd multipliers;  // horizon x buses

    [[nodiscard]] std::size_t horizon() const { return system.size(); }
};

LoadProfile synthesize_load_profiles(int horizon, std::size_t buses, std::uint64_t seed,
                                     const LoadProfileConfig& cfg = {});

struct CleanSample {
    std::size_t t = 0;  // minute index into the profile
    MeasurementSet z;   // noisy
    PowerFlowSolution solution;
    std::uint64_t noise_seed = 0;
};

struct CleanDataset {
    std::vector<CleanSample> samples;
    std::size_t skipped = 0;
};

/// Base loads scaled per bus by the profile, one power flow and one noisy
/// measurement draw per minute. Non-converged minutes are skipped; more than
/// 5% of them is an error.
CleanDataset generate_clean_dataset(const PowerNetwork& net, const LoadProfile& profile, double noise_pct,
                                    std::uint64_t seed);

enum class Split { Train, Val, Test };
std::string to_string(Split s);

/// Seeded 4:1:1 assignment of `count` samples: N/6 validation, N/6 test, the
/// rest train.
std::vector<Split> assign_splits(std::size_t count, std::uint64_t seed);

struct LabeledSample {
    std::size_t t = 0;
    Split split = Split::Train;
    Eigen::MatrixXd X;  // n x 2 injections (P, Q); standardized once assembled
    Eigen::VectorXd y;  // n labels in {0, 1}
    std::optional<AttackKind> kind;

    [[nodiscard]] bool attacked() const { return kind.has_value(); }
};

struct AttackMix {
    std::vector<AttackKind> train_val{AttackKind::Optimization, AttackKind::Distribution};
    std::vector<AttackKind> test{AttackKind::Replay, AttackKind::Scale, AttackKind::Distribution,
                                 AttackKind::Optimization};
    std::size_t region_min = 2;
    std::size_t region_max = 10;
    double budget = 0.1;
    int steps = 50;
    double noise_pct = 1.0;  // must match the clean pipeline
};

/// Attacks exactly floor(m / 2) samples of each split (m = split size), kind
/// uniform over the split's allowed kinds, region size uniform in
/// [region_min, region_max]. Distribution statistics come from the clean
/// train-split samples. The sample at the first timestamp cannot be replayed
/// and gets another kind.
std::vector<LabeledSample> inject_attacks(const PowerNetwork& net, const GraphOperators& ops,
                                          const CleanDataset& clean, const std::vector<Split>& splits,
                                          const AttackMix& mix, std::uint64_t seed);

/// Per-(bus, channel) standardization fitted on the train split. Features
/// with std below kScalerFloor (e.g. zero-injection buses) are only centered.
struct Scaler {
    Eigen::MatrixXd mean;  // n x 2
    Eigen::MatrixXd std;   // n x 2

    static Scaler fit(const std::vector<LabeledSample>& samples);
    void apply(Eigen::MatrixXd& X) const;
};

inline constexpr double kScalerFloor = 1e-6;

struct DatasetBundle {
    std::string case_name;
    std::vector<int> bus_ids;
    std::vector<LabeledSample> train, val, test;
    Scaler scaler;
    nlohmann::json manifest;
};

/// Global seeded shuffle, grouping by each sample's split, then the scaler
/// fitted on train applied to every split.
DatasetBundle assemble_splits(std::vector<LabeledSample> samples, std::uint64_t seed);

struct DatasetConfig {
    int horizon = 8640;
    double noise_pct = 1.0;
    std::uint64_t seed = 42;
    LoadProfileConfig profile;
    AttackMix mix;
};

/// Whole pipeline: profile, clean data, splits, attacks, assembly.
DatasetBundle build_dataset(const PowerNetwork& net, const GraphOperators& ops, const DatasetConfig& cfg);

/// Stacks samples into the batch layout used by training.
SampleSet to_sample_set(const std::vector<LabeledSample>& samples);

/// manifest.json plus train.csv / val.csv / test.csv in `dir`.
void save_dataset(const std::string& dir, const DatasetBundle& bundle);
DatasetBundle load_dataset(const std::string& dir);

}  // namespace gridloc

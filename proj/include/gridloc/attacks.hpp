#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gridloc/grid_model.hpp"
#include "gridloc/powerflow.hpp"

namespace gridloc {

enum class AttackKind { Replay, Scale, Distribution, Optimization };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

/// Bus indices (0-based, ascending) targeted by one attack.
using Region = std::vector<std::size_t>;

/// Connected region: a seeded start bus plus its nearest buses by hop
/// distance, ties broken by a seeded shuffle.
Region select_target_region(const GraphOperators& ops, std::size_t size, std::uint64_t seed);

/// Which stacked measurement entries an attack may touch.
struct Footprint {
    std::vector<bool> entries;  // stacked order: p_inj, q_inj, p_flow, q_flow

    [[nodiscard]] std::size_t count() const;
};

/// Injections at region buses and both directed flows of every in-service
/// branch with an endpoint in the region.
Footprint incident_footprint(const PowerNetwork& net, const Region& region);

void check_region(const PowerNetwork& net, const Region& region);

inline constexpr int kReplayWindow = 60;

/// Replaces every incident measurement of history[t] by the same
/// measurement at one seeded earlier timestamp in [t - window, t - 1].
MeasurementSet replay_attack(const PowerNetwork& net, const std::vector<MeasurementSet>& history, std::size_t t,
                             const Region& region, std::uint64_t seed, int window = kReplayWindow);
/// Same, with the history reached through an accessor over indices [0, size).
MeasurementSet replay_attack(const PowerNetwork& net, const std::function<const MeasurementSet&(std::size_t)>& history,
                             std::size_t size, std::size_t t, const Region& region, std::uint64_t seed,
                             int window = kReplayWindow);

/// Multiplies every incident measurement by an independent U(0.9, 1.1) draw.
MeasurementSet scale_attack(const PowerNetwork& net, const MeasurementSet& z, const Region& region,
                            std::uint64_t seed, double low = 0.9, double high = 1.1);

/// Per-entry mean and variance of a clean measurement history (stacked order).
struct MeasurementStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

MeasurementStats measurement_stats(const std::vector<const MeasurementSet*>& history);

/// Replaces every incident measurement by a draw from N(mean_i, var_i).
MeasurementSet distribution_attack(const PowerNetwork& net, const MeasurementSet& z, const MeasurementStats& stats,
                                   const Region& region, std::uint64_t seed);

struct OptimizationAttackOptions {
    double budget = 0.1;  // bound on ||h(x + c) - h(x)||_2, p.u.
    int steps = 50;
    double noise_pct = 1.0;
    std::uint64_t noise_seed = 0;  // must match the clean sample's noise seed
    double max_state_shift = 0.5;  // cap on ||c||_2
};

struct OptimizationAttackResult {
    MeasurementSet attacked;
    Eigen::VectorXd state_shift;  // c over [v_ang (n); v_mag (n)]
    double attack_norm = 0.0;     // ||h(x + c) - h(x)||_2, noiseless
    Footprint footprint;          // entries that differ from the clean sample
};

/// Maximizes ||c|| subject to ||h(x + c) - h(x)|| <= budget with c supported
/// on the region's states (slack angle excluded), by projected gradient
/// ascent along the constraint boundary. The result is the clean noisy sample
/// plus a * (1 + eps) with the clean sample's own noise factors, i.e.
/// h(x + c) under the same noise draw.
OptimizationAttackResult optimization_attack(const PowerNetwork& net, const PowerFlowSolution& sol,
                                             const Region& region, const OptimizationAttackOptions& opts,
                                             std::uint64_t seed);

}  // namespace gridloc

#include "gridloc/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace gridloc {

namespace {

Eigen::VectorXd& entry_block(MeasurementSet& z, Eigen::Index& offset, Eigen::Index k) {
    // Maps a stacked index onto the owning vector; offset receives the local index.
    Eigen::Index base = 0;
    for (auto* v : {&z.p_inj, &z.q_inj, &z.p_flow, &z.q_flow}) {
        if (k < base + v->size()) {
            offset = k - base;
            return *v;
        }
        base += v->size();
    }
    throw std::out_of_range("measurement index out of range");
}

double& entry(MeasurementSet& z, Eigen::Index k) {
    Eigen::Index local = 0;
    auto& v = entry_block(z, local, k);
    return v(local);
}

double entry(const MeasurementSet& z, Eigen::Index k) {
    return entry(const_cast<MeasurementSet&>(z), k);
}

}  // namespace

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::Replay: return "replay";
        case AttackKind::Scale: return "scale";
        case AttackKind::Distribution: return "distribution";
        case AttackKind::Optimization: return "optimization";
    }
    return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "replay" || s == "A_r") return AttackKind::Replay;
    if (s == "scale" || s == "A_s") return AttackKind::Scale;
    if (s == "distribution" || s == "A_d") return AttackKind::Distribution;
    if (s == "optimization" || s == "A_o") return AttackKind::Optimization;
    throw std::invalid_argument("unknown attack kind '" + s + "'");
}

std::size_t Footprint::count() const {
    return static_cast<std::size_t>(std::count(entries.begin(), entries.end(), true));
}

Region select_target_region(const GraphOperators& ops, std::size_t size, std::uint64_t seed) {
    const std::size_t n = ops.n;
    if (size < 1) throw std::invalid_argument("select_target_region: size must be positive");
    if (size > n) throw std::invalid_argument("select_target_region: size exceeds bus count");
    std::mt19937_64 rng(seed);
    const auto start = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const auto dist = hop_distances(ops.W, start);

    std::vector<std::uint64_t> tie(n);
    for (auto& t : tie) t = rng();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const int da = dist[a] < 0 ? std::numeric_limits<int>::max() : dist[a];
        const int db = dist[b] < 0 ? std::numeric_limits<int>::max() : dist[b];
        if (da != db) return da < db;
        return tie[a] < tie[b];
    });
    Region region(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
    std::sort(region.begin(), region.end());
    return region;
}

void check_region(const PowerNetwork& net, const Region& region) {
    if (region.empty()) throw std::invalid_argument("attack region must not be empty");
    std::vector<bool> seen(net.bus_count(), false);
    for (const auto b : region) {
        if (b >= net.bus_count()) throw std::invalid_argument("attack region references a missing bus");
        if (seen[b]) throw std::invalid_argument("attack region lists a bus twice");
        seen[b] = true;
    }
}

Footprint incident_footprint(const PowerNetwork& net, const Region& region) {
    check_region(net, region);
    const auto n = net.bus_count();
    const auto m = net.flow_count();
    std::vector<bool> in_region(n, false);
    for (const auto b : region) in_region[b] = true;

    Footprint fp;
    fp.entries.assign(net.measurement_count(), false);
    for (std::size_t i = 0; i < n; ++i) {
        fp.entries[i] = in_region[i];
        fp.entries[n + i] = in_region[i];
    }
    for (std::size_t k = 0; k < m; ++k) {
        const auto& fl = net.flows()[k];
        const bool hit = in_region[fl.at] || in_region[fl.other];
        fp.entries[2 * n + k] = hit;
        fp.entries[2 * n + m + k] = hit;
    }
    return fp;
}

MeasurementSet replay_attack(const PowerNetwork& net, const std::function<const MeasurementSet&(std::size_t)>& history,
                             std::size_t size, std::size_t t, const Region& region, std::uint64_t seed, int window) {
    if (t == 0) throw std::invalid_argument("replay_attack: no history before t = 0");
    if (t >= size) throw std::invalid_argument("replay_attack: t outside history");
    if (window < 1) throw std::invalid_argument("replay_attack: window must be positive");
    const auto fp = incident_footprint(net, region);
    std::mt19937_64 rng(seed);
    const std::size_t first = t > static_cast<std::size_t>(window) ? t - static_cast<std::size_t>(window) : 0;
    const auto source = std::uniform_int_distribution<std::size_t>(first, t - 1)(rng);

    MeasurementSet out = history(t);
    const MeasurementSet& past = history(source);
    for (std::size_t k = 0; k < fp.entries.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        if (fp.entries[k]) entry(out, i) = entry(past, i);
    }
    return out;
}

MeasurementSet replay_attack(const PowerNetwork& net, const std::vector<MeasurementSet>& history, std::size_t t,
                             const Region& region, std::uint64_t seed, int window) {
    return replay_attack(
        net, [&](std::size_t i) -> const MeasurementSet& { return history[i]; }, history.size(), t, region, seed,
        window);
}

MeasurementSet scale_attack(const PowerNetwork& net, const MeasurementSet& z, const Region& region,
                            std::uint64_t seed, double low, double high) {
    const auto fp = incident_footprint(net, region);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> factor(low, high);
    MeasurementSet out = z;
    for (std::size_t k = 0; k < fp.entries.size(); ++k) {
        if (fp.entries[k]) entry(out, static_cast<Eigen::Index>(k)) *= factor(rng);
    }
    return out;
}

MeasurementStats measurement_stats(const std::vector<const MeasurementSet*>& history) {
    if (history.empty()) throw std::invalid_argument("measurement_stats: empty history");
    const Eigen::Index dim = history.front()->stacked().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    for (const auto* z : history) mean += z->stacked();
    mean /= static_cast<double>(history.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
    for (const auto* z : history) var += (z->stacked() - mean).cwiseAbs2();
    var /= static_cast<double>(history.size());
    return {mean, var};
}

MeasurementSet distribution_attack(const PowerNetwork& net, const MeasurementSet& z, const MeasurementStats& stats,
                                   const Region& region, std::uint64_t seed) {
    const auto fp = incident_footprint(net, region);
    if (stats.mean.size() != static_cast<Eigen::Index>(fp.entries.size())) {
        throw std::invalid_argument("distribution_attack: statistics do not match the network");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    MeasurementSet out = z;
    for (std::size_t k = 0; k < fp.entries.size(); ++k) {
        if (!fp.entries[k]) continue;
        const auto i = static_cast<Eigen::Index>(k);
        entry(out, i) = stats.mean(i) + std::sqrt(stats.variance(i)) * unit(rng);
    }
    return out;
}

OptimizationAttackResult optimization_attack(const PowerNetwork& net, const PowerFlowSolution& sol,
                                             const Region& region, const OptimizationAttackOptions& opts,
                                             std::uint64_t seed) {
    if (!sol.converged) throw std::invalid_argument("optimization_attack: solution not converged");
    check_region(net, region);
    const auto n = static_cast<Eigen::Index>(net.bus_count());

    // Support of c in [v_ang (n); v_mag (n)] coordinates.
    std::vector<Eigen::Index> support;
    for (const auto b : region) {
        if (b != net.slack()) support.push_back(static_cast<Eigen::Index>(b));
    }
    for (const auto b : region) support.push_back(n + static_cast<Eigen::Index>(b));
    const auto ns = static_cast<Eigen::Index>(support.size());

    const Eigen::VectorXd h0 = evaluate_measurements(net, sol.v_mag, sol.v_ang).stacked();
    auto delta = [&](const Eigen::VectorXd& cs) {
        Eigen::VectorXd va = sol.v_ang;
        Eigen::VectorXd vm = sol.v_mag;
        for (Eigen::Index j = 0; j < ns; ++j) {
            const auto idx = support[static_cast<std::size_t>(j)];
            if (idx < n) {
                va(idx) += cs(j);
            } else {
                vm(idx - n) += cs(j);
            }
        }
        Eigen::VectorXd a = evaluate_measurements(net, vm, va).stacked() - h0;
        if (!a.allFinite()) throw std::runtime_error("optimization_attack: measurement model failed at shifted state");
        return std::make_pair(a, std::make_pair(vm, va));
    };
    // Largest s in [0, cap] along unit direction d with ||a(s d)|| <= budget.
    auto boundary = [&](const Eigen::VectorXd& d) {
        const double cap = opts.max_state_shift;
        if (delta(cap * d).first.norm() <= opts.budget) return cap;
        double lo = 0.0;
        double hi = cap;
        for (int i = 0; i < 60 && hi - lo > 1e-10 * hi; ++i) {
            const double mid = 0.5 * (lo + hi);
            (delta(mid * d).first.norm() <= opts.budget ? lo : hi) = mid;
        }
        return lo;
    };

    Eigen::VectorXd cs = Eigen::VectorXd::Zero(ns);
    if (opts.budget > 0.0 && ns > 0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> unit(0.0, 1.0);
        Eigen::VectorXd d(ns);
        for (Eigen::Index j = 0; j < ns; ++j) d(j) = unit(rng);
        d.normalize();
        cs = boundary(d) * d;

        double eta = 1.0;
        for (int step = 0; step < opts.steps && cs.norm() > 0.0; ++step) {
            const auto [a, state] = delta(cs);
            const Eigen::MatrixXd H = measurement_jacobian(net, state.first, state.second);
            Eigen::VectorXd normal(ns);
            for (Eigen::Index j = 0; j < ns; ++j) normal(j) = H.col(support[static_cast<std::size_t>(j)]).dot(a);
            if (normal.norm() == 0.0) break;
            normal.normalize();
            // Ascent direction of ||c||^2 projected onto the constraint surface.
            Eigen::VectorXd tangent = cs - cs.dot(normal) * normal;
            if (tangent.norm() < 1e-14 * cs.norm()) break;
            tangent.normalize();
            const Eigen::VectorXd candidate = cs + eta * cs.norm() * tangent;
            const Eigen::VectorXd dir = candidate.normalized();
            const Eigen::VectorXd next = boundary(dir) * dir;
            if (next.norm() > cs.norm() * (1.0 + 1e-12)) {
                cs = next;
                eta = std::min(1.0, eta * 1.5);
            } else {
                eta *= 0.5;
                if (eta < 1e-6) break;
            }
        }
    }

    OptimizationAttackResult res;
    const auto [a, state] = delta(cs);
    res.state_shift = Eigen::VectorXd::Zero(2 * n);
    for (Eigen::Index j = 0; j < ns; ++j) res.state_shift(support[static_cast<std::size_t>(j)]) = cs(j);
    res.attack_norm = a.norm();

    // Clean noisy sample, then a * (1 + eps) on the entries the shift moved.
    const Eigen::VectorXd factors = noise_factors(net.measurement_count(), opts.noise_pct, opts.noise_seed);
    Eigen::VectorXd z = h0.cwiseProduct(factors);
    res.footprint.entries.assign(net.measurement_count(), false);
    for (Eigen::Index k = 0; k < z.size(); ++k) {
        if (a(k) != 0.0) {
            z(k) += a(k) * factors(k);
            res.footprint.entries[static_cast<std::size_t>(k)] = true;
        }
    }
    res.attacked = MeasurementSet::unstack(z, net.bus_count(), net.flow_count());
    return res;
}

}  // namespace gridloc

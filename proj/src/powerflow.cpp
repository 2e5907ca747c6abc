#include "gridloc/powerflow.hpp"

#include <cmath>
#include <random>

namespace gridloc {

namespace {

using C = std::complex<double>;
constexpr C kJ(0.0, 1.0);

Eigen::VectorXcd complex_voltage(const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang) {
    Eigen::VectorXcd V(v_mag.size());
    for (Eigen::Index i = 0; i < V.size(); ++i) V(i) = std::polar(v_mag(i), v_ang(i));
    return V;
}

/// dS/dVa and dS/dVm of the bus injections, dense n x n.
void injection_derivatives(const ComplexMatrix& Y, const Eigen::VectorXcd& V, Eigen::MatrixXcd& dS_dVa,
                           Eigen::MatrixXcd& dS_dVm) {
    const Eigen::VectorXcd I = Y * V;
    const Eigen::VectorXcd Vn = V.array() / V.array().abs();
    // j diag(V) conj(diag(I) - Y diag(V))
    dS_dVa = -kJ * (V.asDiagonal() * (Y * V.asDiagonal()).conjugate());
    dS_dVa.diagonal() += kJ * V.cwiseProduct(I.conjugate());
    // diag(V) conj(Y diag(Vn)) + conj(diag(I)) diag(Vn)
    dS_dVm = V.asDiagonal() * (Y * Vn.asDiagonal()).conjugate();
    dS_dVm.diagonal() += I.conjugate().cwiseProduct(Vn);
}

Eigen::VectorXcd specified_injection(const PowerNetwork& net, const std::vector<BusLoad>& loads) {
    const auto n = net.bus_count();
    const double base = net.grid().base_mva;
    Eigen::VectorXcd s(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        s(k) = C(net.p_gen()(k) - loads[i].p_mw / base, net.q_gen()(k) - loads[i].q_mvar / base);
    }
    return s;
}

struct BusSets {
    std::vector<Eigen::Index> pvpq;
    std::vector<Eigen::Index> pq;
};

BusSets classify(const PowerNetwork& net) {
    BusSets sets;
    const auto& buses = net.grid().buses;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].type != BusType::Slack) sets.pvpq.push_back(static_cast<Eigen::Index>(i));
        if (buses[i].type == BusType::PQ) sets.pq.push_back(static_cast<Eigen::Index>(i));
    }
    return sets;
}

Eigen::VectorXd mismatch_vector(const PowerNetwork& net, const BusSets& sets, const Eigen::VectorXcd& V,
                                const Eigen::VectorXcd& s_spec) {
    const Eigen::VectorXcd s_calc = V.cwiseProduct((net.ybus() * V).conjugate());
    const auto npv = static_cast<Eigen::Index>(sets.pvpq.size());
    Eigen::VectorXd F(npv + static_cast<Eigen::Index>(sets.pq.size()));
    for (Eigen::Index k = 0; k < npv; ++k) {
        const auto i = sets.pvpq[static_cast<std::size_t>(k)];
        F(k) = (s_calc(i) - s_spec(i)).real();
    }
    for (std::size_t k = 0; k < sets.pq.size(); ++k) {
        const auto i = sets.pq[k];
        F(npv + static_cast<Eigen::Index>(k)) = (s_calc(i) - s_spec(i)).imag();
    }
    return F;
}

}  // namespace

std::vector<BusLoad> case_loads(const GridCase& grid) {
    std::vector<BusLoad> loads;
    loads.reserve(grid.size());
    for (const auto& b : grid.buses) loads.push_back({b.p_load, b.q_load});
    return loads;
}

PowerNetwork::PowerNetwork(GridCase grid) : grid_(std::move(grid)) {
    if (grid_.id_to_index.size() != grid_.buses.size()) grid_.finalize();
    validate_case(grid_);
    ybus_ = build_ybus(grid_);
    slack_ = grid_.slack_index();

    const auto n = static_cast<Eigen::Index>(grid_.size());
    for (std::size_t k = 0; k < grid_.branches.size(); ++k) {
        const auto& br = grid_.branches[k];
        if (!br.in_service) continue;
        const auto a = branch_admittance(br);
        const auto f = grid_.index_of(br.from);
        const auto t = grid_.index_of(br.to);
        flows_.push_back({k, f, t, a.yff, a.yft});
        flows_.push_back({k, t, f, a.ytt, a.ytf});
    }

    shunt_g_.resize(n);
    shunt_b_.resize(n);
    v_start_.resize(n);
    a_start_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& b = grid_.buses[static_cast<std::size_t>(i)];
        shunt_g_(i) = b.gs / grid_.base_mva;
        shunt_b_(i) = b.bs / grid_.base_mva;
        v_start_(i) = b.v_mag_init;
        a_start_(i) = b.v_ang_init;
    }
    p_gen_ = Eigen::VectorXd::Zero(n);
    q_gen_ = Eigen::VectorXd::Zero(n);
    std::vector<bool> has_setpoint(static_cast<std::size_t>(n), false);
    for (const auto& g : grid_.generators) {
        if (!g.in_service) continue;
        const auto i = static_cast<Eigen::Index>(grid_.index_of(g.bus));
        p_gen_(i) += g.p_gen / grid_.base_mva;
        q_gen_(i) += g.q_gen / grid_.base_mva;
        const auto type = grid_.buses[static_cast<std::size_t>(i)].type;
        if (type != BusType::PQ && !has_setpoint[static_cast<std::size_t>(i)]) {
            v_start_(i) = g.v_setpoint;
            has_setpoint[static_cast<std::size_t>(i)] = true;
        }
    }
}

double powerflow_mismatch(const PowerNetwork& net, const std::vector<BusLoad>& loads,
                          const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang) {
    const auto sets = classify(net);
    const auto F = mismatch_vector(net, sets, complex_voltage(v_mag, v_ang), specified_injection(net, loads));
    return F.size() == 0 ? 0.0 : F.cwiseAbs().maxCoeff();
}

PowerFlowSolution solve_ac_powerflow(const PowerNetwork& net, const std::vector<BusLoad>& loads,
                                     const PowerFlowOptions& opts) {
    if (loads.size() != net.bus_count()) throw std::invalid_argument("solve_ac_powerflow: loads size != bus count");
    const auto sets = classify(net);
    const Eigen::VectorXcd s_spec = specified_injection(net, loads);
    const auto npv = static_cast<Eigen::Index>(sets.pvpq.size());
    const auto npq = static_cast<Eigen::Index>(sets.pq.size());

    PowerFlowSolution sol;
    sol.v_mag = net.v_start();
    sol.v_ang = net.a_start();

    Eigen::MatrixXcd dS_dVa, dS_dVm;
    Eigen::MatrixXd J(npv + npq, npv + npq);
    double last = std::numeric_limits<double>::infinity();
    for (int it = 0;; ++it) {
        const Eigen::VectorXcd V = complex_voltage(sol.v_mag, sol.v_ang);
        const Eigen::VectorXd F = mismatch_vector(net, sets, V, s_spec);
        last = F.size() == 0 ? 0.0 : F.cwiseAbs().maxCoeff();
        if (!std::isfinite(last) || last > 1e8) {
            throw PowerFlowError("power flow diverged at iteration " + std::to_string(it), last);
        }
        if (last <= opts.tolerance) {
            sol.converged = true;
            sol.iterations = it;
            sol.max_mismatch = last;
            return sol;
        }
        if (it >= opts.max_iterations) {
            throw PowerFlowError("power flow did not converge in " + std::to_string(opts.max_iterations) +
                                     " iterations (mismatch " + std::to_string(last) + ")",
                                 last);
        }

        injection_derivatives(net.ybus(), V, dS_dVa, dS_dVm);
        for (Eigen::Index r = 0; r < npv; ++r) {
            const auto i = sets.pvpq[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < npv; ++c) J(r, c) = dS_dVa(i, sets.pvpq[static_cast<std::size_t>(c)]).real();
            for (Eigen::Index c = 0; c < npq; ++c) J(r, npv + c) = dS_dVm(i, sets.pq[static_cast<std::size_t>(c)]).real();
        }
        for (Eigen::Index r = 0; r < npq; ++r) {
            const auto i = sets.pq[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < npv; ++c) {
                J(npv + r, c) = dS_dVa(i, sets.pvpq[static_cast<std::size_t>(c)]).imag();
            }
            for (Eigen::Index c = 0; c < npq; ++c) {
                J(npv + r, npv + c) = dS_dVm(i, sets.pq[static_cast<std::size_t>(c)]).imag();
            }
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
        const auto pivots = lu.matrixLU().diagonal().cwiseAbs();
        if (J.size() > 0 && !(pivots.minCoeff() > 1e-13 * pivots.maxCoeff())) {
            throw PowerFlowError("singular Jacobian at iteration " + std::to_string(it), last);
        }
        const Eigen::VectorXd dx = lu.solve(-F);
        for (Eigen::Index k = 0; k < npv; ++k) sol.v_ang(sets.pvpq[static_cast<std::size_t>(k)]) += dx(k);
        for (Eigen::Index k = 0; k < npq; ++k) sol.v_mag(sets.pq[static_cast<std::size_t>(k)]) += dx(npv + k);
    }
}

PowerFlowSolution solve_ac_powerflow(const GridCase& grid, const std::vector<BusLoad>& loads,
                                     const PowerFlowOptions& opts) {
    return solve_ac_powerflow(PowerNetwork(grid), loads, opts);
}

Eigen::VectorXd MeasurementSet::stacked() const {
    Eigen::VectorXd z(p_inj.size() + q_inj.size() + p_flow.size() + q_flow.size());
    z << p_inj, q_inj, p_flow, q_flow;
    return z;
}

MeasurementSet MeasurementSet::unstack(const Eigen::VectorXd& z, std::size_t buses, std::size_t flows) {
    const auto n = static_cast<Eigen::Index>(buses);
    const auto m = static_cast<Eigen::Index>(flows);
    if (z.size() != 2 * n + 2 * m) throw std::invalid_argument("MeasurementSet::unstack: size mismatch");
    MeasurementSet s;
    s.p_inj = z.segment(0, n);
    s.q_inj = z.segment(n, n);
    s.p_flow = z.segment(2 * n, m);
    s.q_flow = z.segment(2 * n + m, m);
    return s;
}

MeasurementSet evaluate_measurements(const PowerNetwork& net, const Eigen::VectorXd& v_mag,
                                     const Eigen::VectorXd& v_ang) {
    const Eigen::VectorXcd V = complex_voltage(v_mag, v_ang);
    const Eigen::VectorXcd S = V.cwiseProduct((net.ybus() * V).conjugate());
    MeasurementSet z;
    z.p_inj = S.real();
    z.q_inj = S.imag();
    const auto m = static_cast<Eigen::Index>(net.flow_count());
    z.p_flow.resize(m);
    z.q_flow.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& fl = net.flows()[static_cast<std::size_t>(k)];
        const C va = V(static_cast<Eigen::Index>(fl.at));
        const C vb = V(static_cast<Eigen::Index>(fl.other));
        const C s = va * std::conj(fl.y_self * va + fl.y_mutual * vb);
        z.p_flow(k) = s.real();
        z.q_flow(k) = s.imag();
    }
    return z;
}

Eigen::VectorXd noise_factors(std::size_t count, double noise_pct, std::uint64_t seed) {
    Eigen::VectorXd f = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(count));
    if (noise_pct == 0.0) return f;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> eps(0.0, noise_pct / 100.0);
    for (Eigen::Index i = 0; i < f.size(); ++i) f(i) += eps(rng);
    return f;
}

void apply_measurement_noise(MeasurementSet& z, double noise_pct, std::uint64_t seed) {
    if (noise_pct == 0.0) return;
    const std::size_t total = static_cast<std::size_t>(z.p_inj.size() + z.q_inj.size() + z.p_flow.size() + z.q_flow.size());
    const Eigen::VectorXd f = noise_factors(total, noise_pct, seed);
    Eigen::Index k = 0;
    for (auto* v : {&z.p_inj, &z.q_inj, &z.p_flow, &z.q_flow}) {
        for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) *= f(k++);
    }
}

MeasurementSet compute_measurements(const PowerNetwork& net, const PowerFlowSolution& sol, double noise_pct,
                                    std::uint64_t seed) {
    if (!sol.converged) throw std::invalid_argument("compute_measurements: solution not converged");
    auto z = evaluate_measurements(net, sol.v_mag, sol.v_ang);
    apply_measurement_noise(z, noise_pct, seed);
    return z;
}

Eigen::MatrixXd measurement_jacobian(const PowerNetwork& net, const Eigen::VectorXd& v_mag,
                                     const Eigen::VectorXd& v_ang) {
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    const auto m = static_cast<Eigen::Index>(net.flow_count());
    const Eigen::VectorXcd V = complex_voltage(v_mag, v_ang);
    Eigen::MatrixXcd dS_dVa, dS_dVm;
    injection_derivatives(net.ybus(), V, dS_dVa, dS_dVm);

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * n + 2 * m, 2 * n);
    H.block(0, 0, n, n) = dS_dVa.real();
    H.block(0, n, n, n) = dS_dVm.real();
    H.block(n, 0, n, n) = dS_dVa.imag();
    H.block(n, n, n, n) = dS_dVm.imag();

    // S = m_a^2 conj(y_self) + m_a m_b conj(y_mutual) e^{j(th_a - th_b)}
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& fl = net.flows()[static_cast<std::size_t>(k)];
        const auto a = static_cast<Eigen::Index>(fl.at);
        const auto b = static_cast<Eigen::Index>(fl.other);
        const C cross = std::conj(fl.y_mutual) * std::polar(1.0, v_ang(a) - v_ang(b));
        const C d_tha = kJ * v_mag(a) * v_mag(b) * cross;
        const C d_ma = 2.0 * v_mag(a) * std::conj(fl.y_self) + v_mag(b) * cross;
        const C d_mb = v_mag(a) * cross;
        const Eigen::Index rp = 2 * n + k;
        const Eigen::Index rq = 2 * n + m + k;
        H(rp, a) += d_tha.real();
        H(rp, b) -= d_tha.real();
        H(rq, a) += d_tha.imag();
        H(rq, b) -= d_tha.imag();
        H(rp, n + a) += d_ma.real();
        H(rq, n + a) += d_ma.imag();
        H(rp, n + b) += d_mb.real();
        H(rq, n + b) += d_mb.imag();
    }
    return H;
}

StateEstimate wls_estimate(const PowerNetwork& net, const MeasurementSet& z, int max_iterations) {
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    const Eigen::VectorXd zv = z.stacked();
    if (zv.size() != static_cast<Eigen::Index>(net.measurement_count())) {
        throw std::invalid_argument("wls_estimate: measurement set does not match the network");
    }
    if (zv.size() < 2 * n - 1) throw EstimationError("wls_estimate: fewer measurements than states");

    const auto slack = static_cast<Eigen::Index>(net.slack());
    // State columns: every angle except the slack, then every magnitude.
    std::vector<Eigen::Index> cols;
    for (Eigen::Index i = 0; i < 2 * n; ++i) {
        if (i != slack) cols.push_back(i);
    }
    const auto ns = static_cast<Eigen::Index>(cols.size());

    StateEstimate est;
    est.v_mag = net.v_start();
    est.v_ang = net.a_start();
    Eigen::MatrixXd Hs(zv.size(), ns);
    for (int it = 1; it <= max_iterations; ++it) {
        const Eigen::VectorXd r = zv - evaluate_measurements(net, est.v_mag, est.v_ang).stacked();
        const Eigen::MatrixXd H = measurement_jacobian(net, est.v_mag, est.v_ang);
        for (Eigen::Index c = 0; c < ns; ++c) Hs.col(c) = H.col(cols[static_cast<std::size_t>(c)]);
        const Eigen::MatrixXd G = Hs.transpose() * Hs;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
        const auto d = ldlt.vectorD().cwiseAbs();
        if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * d.maxCoeff())) {
            throw EstimationError("wls_estimate: singular gain matrix");
        }
        const Eigen::VectorXd dx = ldlt.solve(Hs.transpose() * r);
        if (!dx.allFinite()) throw EstimationError("wls_estimate: non-finite update");
        for (Eigen::Index c = 0; c < ns; ++c) {
            const auto col = cols[static_cast<std::size_t>(c)];
            if (col < n) {
                est.v_ang(col) += dx(c);
            } else {
                est.v_mag(col - n) += dx(c);
            }
        }
        est.iterations = it;
        if (dx.cwiseAbs().maxCoeff() < 1e-10) {
            est.residual_norm = (zv - evaluate_measurements(net, est.v_mag, est.v_ang).stacked()).norm();
            return est;
        }
    }
    throw EstimationError("wls_estimate: no convergence in " + std::to_string(max_iterations) + " iterations");
}

}  // namespace gridloc

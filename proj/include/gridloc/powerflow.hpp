#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridloc/grid_model.hpp"

namespace gridloc {

struct BusLoad {
    double p_mw = 0.0;
    double q_mvar = 0.0;
};

/// Loads as listed in the case file, in bus order.
std::vector<BusLoad> case_loads(const GridCase& grid);

/// One measured end of an in-service branch.
struct DirectedFlow {
    std::size_t branch = 0;  // index into GridCase::branches
    std::size_t at = 0;      // bus index where the flow is metered
    std::size_t other = 0;
    std::complex<double> y_self;    // yff or ytt
    std::complex<double> y_mutual;  // yft or ytf
};

/// Immutable network data shared by power flow, state estimation and the
/// attack generators. Directed flows come in pairs: 2k is the from end of the
/// k-th in-service branch, 2k + 1 its to end.
class PowerNetwork {
  public:
    explicit PowerNetwork(GridCase grid);

    [[nodiscard]] const GridCase& grid() const { return grid_; }
    [[nodiscard]] std::size_t bus_count() const { return grid_.size(); }
    [[nodiscard]] std::size_t flow_count() const { return flows_.size(); }
    [[nodiscard]] std::size_t measurement_count() const { return 2 * bus_count() + 2 * flow_count(); }
    [[nodiscard]] std::size_t slack() const { return slack_; }
    [[nodiscard]] const ComplexMatrix& ybus() const { return ybus_; }
    [[nodiscard]] const std::vector<DirectedFlow>& flows() const { return flows_; }
    [[nodiscard]] const Eigen::VectorXd& shunt_g() const { return shunt_g_; }
    [[nodiscard]] const Eigen::VectorXd& shunt_b() const { return shunt_b_; }
    /// Scheduled generation in p.u. (summed over in-service units).
    [[nodiscard]] const Eigen::VectorXd& p_gen() const { return p_gen_; }
    [[nodiscard]] const Eigen::VectorXd& q_gen() const { return q_gen_; }
    [[nodiscard]] const Eigen::VectorXd& v_start() const { return v_start_; }
    [[nodiscard]] const Eigen::VectorXd& a_start() const { return a_start_; }

  private:
    GridCase grid_;
    ComplexMatrix ybus_;
    std::vector<DirectedFlow> flows_;
    Eigen::VectorXd shunt_g_, shunt_b_, p_gen_, q_gen_, v_start_, a_start_;
    std::size_t slack_ = 0;
};

struct PowerFlowSolution {
    Eigen::VectorXd v_mag;
    Eigen::VectorXd v_ang;
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;
};

class PowerFlowError : public std::runtime_error {
  public:
    PowerFlowError(const std::string& what, double last_mismatch)
        : std::runtime_error(what), last_mismatch_(last_mismatch) {}
    [[nodiscard]] double last_mismatch() const { return last_mismatch_; }

  private:
    double last_mismatch_;
};

struct PowerFlowOptions {
    double tolerance = 1e-10;  // p.u.
    int max_iterations = 50;
};

/// Newton-Raphson in polar coordinates from the case voltages. PV buses keep
/// their setpoint magnitude and scheduled active power; Q limits are ignored.
PowerFlowSolution solve_ac_powerflow(const PowerNetwork& net, const std::vector<BusLoad>& loads,
                                     const PowerFlowOptions& opts = {});
PowerFlowSolution solve_ac_powerflow(const GridCase& grid, const std::vector<BusLoad>& loads,
                                     const PowerFlowOptions& opts = {});

/// Largest |P| / |Q| mismatch over the buses where they are specified.
double powerflow_mismatch(const PowerNetwork& net, const std::vector<BusLoad>& loads,
                          const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang);

/// All quantities in p.u. Flow indices follow PowerNetwork::flows().
struct MeasurementSet {
    Eigen::VectorXd p_inj;
    Eigen::VectorXd q_inj;
    Eigen::VectorXd p_flow;
    Eigen::VectorXd q_flow;

    [[nodiscard]] Eigen::VectorXd stacked() const;
    static MeasurementSet unstack(const Eigen::VectorXd& z, std::size_t buses, std::size_t flows);
};

/// Exact h(x).
MeasurementSet evaluate_measurements(const PowerNetwork& net, const Eigen::VectorXd& v_mag,
                                     const Eigen::VectorXd& v_ang);

/// The (1 + eps) factors, eps ~ N(0, noise_pct / 100), drawn in stacked order.
Eigen::VectorXd noise_factors(std::size_t count, double noise_pct, std::uint64_t seed);

/// Multiplies each entry of the stacked vector by its noise factor.
void apply_measurement_noise(MeasurementSet& z, double noise_pct, std::uint64_t seed);

MeasurementSet compute_measurements(const PowerNetwork& net, const PowerFlowSolution& sol, double noise_pct,
                                    std::uint64_t seed);

/// d h / d [v_ang (n); v_mag (n)], rows in stacked measurement order.
Eigen::MatrixXd measurement_jacobian(const PowerNetwork& net, const Eigen::VectorXd& v_mag,
                                     const Eigen::VectorXd& v_ang);

struct StateEstimate {
    Eigen::VectorXd v_mag;
    Eigen::VectorXd v_ang;
    double residual_norm = 0.0;
    int iterations = 0;
};

class EstimationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Gauss-Newton weighted least squares with unit weights over every
/// injection and directed flow. The slack angle is held at its case value.
StateEstimate wls_estimate(const PowerNetwork& net, const MeasurementSet& z, int max_iterations = 50);

}  // namespace gridloc

#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace gridloc {

enum class BusType { PQ, PV, Slack };

struct Bus {
    int id = 0;
    BusType type = BusType::PQ;
    double p_load = 0.0;  // MW
    double q_load = 0.0;  // MVAr
    double gs = 0.0;      // MW demanded at V = 1 p.u.
    double bs = 0.0;      // MVAr injected at V = 1 p.u.
    double v_mag_init = 1.0;  // p.u.
    double v_ang_init = 0.0;  // rad
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;
    double tap = 1.0;    // 0 in the file means nominal
    double shift = 0.0;  // rad
    bool in_service = true;
};

struct Generator {
    int bus = 0;
    double p_gen = 0.0;  // MW
    double q_gen = 0.0;  // MVAr
    double v_setpoint = 1.0;
    bool in_service = true;
};

/// Parsed network model. Buses are kept in file order; `index_of` maps an
/// external bus id to its dense 0-based position.
struct GridCase {
    std::string name;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;

    [[nodiscard]] std::size_t size() const { return buses.size(); }
    [[nodiscard]] std::size_t index_of(int bus_id) const;
    [[nodiscard]] std::size_t slack_index() const;

    // Rebuilt by `finalize`; parse_case calls it.
    std::unordered_map<int, std::size_t> id_to_index;
    void finalize();
};

class CaseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Parses a MATPOWER-style case (`mpc.baseMVA`, `mpc.bus`, `mpc.gen`,
/// `mpc.branch`). Validates slack count, branch endpoints and connectivity.
GridCase parse_case(std::string_view text);
GridCase load_case_file(const std::string& path);

/// Checks every GridCase invariant; throws CaseError on the first violation.
void validate_case(const GridCase& grid);

/// True if the in-service branch graph spans every bus.
bool is_connected(const GridCase& grid);

using ComplexMatrix = Eigen::MatrixXcd;

/// Pi-model terminal admittances of a single branch.
struct BranchAdmittance {
    std::complex<double> yff, yft, ytf, ytt;
};

BranchAdmittance branch_admittance(const Branch& br);

/// Nodal admittance matrix in p.u. Out-of-service branches are skipped.
ComplexMatrix build_ybus(const GridCase& grid);

struct GraphOperators {
    std::size_t n = 0;
    Eigen::MatrixXd W;
    Eigen::VectorXd degree;
    Eigen::MatrixXd L;
    Eigen::MatrixXd L_mod;
    Eigen::SparseMatrix<double> L_mod_sparse;  // same operator, for sparse grids
};

/// W = |Ybus| off the diagonal (symmetrized), L = I - D^-1/2 W D^-1/2,
/// L_mod = I - L.
GraphOperators build_graph_operators(const GridCase& grid);
GraphOperators graph_operators_from_adjacency(const Eigen::MatrixXd& W);

/// Hop distance from `source` over the nonzero pattern of W.
std::vector<int> hop_distances(const Eigen::MatrixXd& W, std::size_t source);

}  // namespace gridloc

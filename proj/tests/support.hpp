#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "gridloc/grid_model.hpp"
#include "gridloc/layers.hpp"

namespace testsupport {

inline std::string data_path(const std::string& file) {
    return std::string(GRIDLOC_DATA_DIR) + "/" + file;
}

inline const gridloc::GridCase& case14() {
    static const gridloc::GridCase c = gridloc::load_case_file(data_path("case14.m"));
    return c;
}

inline const gridloc::GridCase& case300() {
    static const gridloc::GridCase c = gridloc::load_case_file(data_path("case300.m"));
    return c;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = d(rng);
    }
    return m;
}

/// Random connected weighted graph: a path plus extra random edges.
inline gridloc::GraphOperators random_graph(Eigen::Index n, std::mt19937_64& rng, int extra_edges = 3) {
    std::uniform_real_distribution<double> w(0.5, 2.0);
    std::uniform_int_distribution<Eigen::Index> node(0, n - 1);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) W(i, i + 1) = W(i + 1, i) = w(rng);
    for (int e = 0; e < extra_edges; ++e) {
        const auto a = node(rng);
        const auto b = node(rng);
        if (a != b) W(a, b) = W(b, a) = w(rng);
    }
    return gridloc::graph_operators_from_adjacency(W);
}

/// Central differences of f over every entry of `value`, step h.
inline Eigen::MatrixXd numeric_gradient(Eigen::MatrixXd& value, const std::function<double()>& f, double h = 1e-5) {
    Eigen::MatrixXd g(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
        const double keep = value(i);
        value(i) = keep + h;
        const double up = f();
        value(i) = keep - h;
        const double down = f();
        value(i) = keep;
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

/// ||a - n|| / max(||a||, ||n||) over one parameter tensor; 0 when both vanish.
inline double gradient_relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
    const double denom = std::max(analytic.norm(), numeric.norm());
    return denom == 0.0 ? 0.0 : (analytic - numeric).norm() / denom;
}

}  // namespace testsupport

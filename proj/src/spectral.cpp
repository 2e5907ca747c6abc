#include "gridloc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gridloc {

namespace {

void require_rows(const Eigen::MatrixXd& U, Eigen::Index rows, const char* what) {
    if (U.rows() != rows || U.cols() != rows) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch");
    }
}

}  // namespace

SpectralDecomposition eigendecompose(const Eigen::MatrixXd& L) {
    if (L.rows() != L.cols()) throw std::invalid_argument("eigendecompose: matrix is not square");
    if ((L - L.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw std::invalid_argument("eigendecompose: matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L);
    if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecompose: solver did not converge");

    SpectralDecomposition dec;
    dec.eigenvalues = solver.eigenvalues();
    dec.eigenvectors = solver.eigenvectors();
    for (Eigen::Index j = 0; j < dec.eigenvectors.cols(); ++j) {
        auto col = dec.eigenvectors.col(j);
        for (Eigen::Index i = 0; i < col.size(); ++i) {
            if (std::abs(col(i)) > 1e-12) {
                if (col(i) < 0.0) col = -col;
                break;
            }
        }
    }
    return dec;
}

Eigen::VectorXd gft(const Eigen::MatrixXd& U, const Eigen::VectorXd& x) {
    require_rows(U, x.size(), "gft");
    return U.transpose() * x;
}

Eigen::VectorXd igft(const Eigen::MatrixXd& U, const Eigen::VectorXd& x_hat) {
    require_rows(U, x_hat.size(), "igft");
    return U * x_hat;
}

Eigen::MatrixXd apply_spectral_filter(const SpectralDecomposition& dec, const SpectralResponse& h,
                                      const Eigen::MatrixXd& X) {
    require_rows(dec.eigenvectors, X.rows(), "apply_spectral_filter");
    Eigen::VectorXd gains(dec.size());
    for (Eigen::Index i = 0; i < dec.size(); ++i) gains(i) = h(dec.eigenvalues(i));
    return dec.eigenvectors * (gains.asDiagonal() * (dec.eigenvectors.transpose() * X));
}

double ideal_highpass_response(double lambda, double lambda_max) {
    return lambda > lambda_max / 2.0 ? 1.0 : 0.0;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<ResponseStats> empirical_frequency_response(const SpectralDecomposition& dec,
                                                        const Eigen::MatrixXd& inputs,
                                                        const Eigen::MatrixXd& outputs) {
    require_rows(dec.eigenvectors, inputs.rows(), "empirical_frequency_response");
    if (outputs.rows() != inputs.rows() || outputs.cols() != inputs.cols()) {
        throw std::invalid_argument("empirical_frequency_response: input/output shape mismatch");
    }
    const Eigen::MatrixXd in_hat = dec.eigenvectors.transpose() * inputs;
    const Eigen::MatrixXd out_hat = dec.eigenvectors.transpose() * outputs;
    const Eigen::VectorXd norms = inputs.colwise().norm().transpose();

    std::vector<ResponseStats> stats(static_cast<std::size_t>(dec.size()));
    std::vector<double> ratios;
    for (Eigen::Index i = 0; i < dec.size(); ++i) {
        ratios.clear();
        for (Eigen::Index p = 0; p < inputs.cols(); ++p) {
            const double denom = in_hat(i, p);
            if (std::abs(denom) < 1e-8 * norms(p) || denom == 0.0) continue;
            ratios.push_back(out_hat(i, p) / denom);
        }
        auto& s = stats[static_cast<std::size_t>(i)];
        s.lambda = dec.eigenvalues(i);
        s.pairs = ratios.size();
        if (ratios.empty()) continue;
        double sum = 0.0;
        for (const double r : ratios) sum += r;
        s.mean = sum / static_cast<double>(ratios.size());
        s.p10 = percentile(ratios, 0.10);
        s.p90 = percentile(ratios, 0.90);
    }
    return stats;
}

}  // namespace gridloc

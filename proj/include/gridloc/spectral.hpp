#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace gridloc {

/// Eigenpairs of a symmetric graph operator, eigenvalues ascending.
/// Each eigenvector's first entry with |v| > 1e-12 is positive.
struct SpectralDecomposition {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;

    [[nodiscard]] Eigen::Index size() const { return eigenvalues.size(); }
    [[nodiscard]] double lambda_max() const { return eigenvalues(eigenvalues.size() - 1); }
};

SpectralDecomposition eigendecompose(const Eigen::MatrixXd& L);

Eigen::VectorXd gft(const Eigen::MatrixXd& U, const Eigen::VectorXd& x);
Eigen::VectorXd igft(const Eigen::MatrixXd& U, const Eigen::VectorXd& x_hat);

using SpectralResponse = std::function<double(double)>;

/// U h(Lambda) U^T X.
Eigen::MatrixXd apply_spectral_filter(const SpectralDecomposition& dec, const SpectralResponse& h,
                                      const Eigen::MatrixXd& X);

/// 1 above lambda_max / 2, 0 otherwise.
double ideal_highpass_response(double lambda, double lambda_max);

struct ResponseStats {
    double lambda = 0.0;
    std::optional<double> mean;
    std::optional<double> p10;
    std::optional<double> p90;
    std::size_t pairs = 0;
};

/// Per-eigenvalue statistics of (u_i^T y) / (u_i^T x) over the columns of
/// (inputs, outputs). Columns whose projection is below 1e-8 * ||x|| are
/// dropped for that index; an index with no surviving pair has no value.
std::vector<ResponseStats> empirical_frequency_response(const SpectralDecomposition& dec,
                                                        const Eigen::MatrixXd& inputs,
                                                        const Eigen::MatrixXd& outputs);

/// Linear-interpolated percentile of an unsorted sample, q in [0, 1].
double percentile(std::vector<double> values, double q);

}  // namespace gridloc

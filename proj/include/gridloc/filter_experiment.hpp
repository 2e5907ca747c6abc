#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridloc/model.hpp"
#include "gridloc/spectral.hpp"
#include "gridloc/train.hpp"

namespace gridloc {

/// Fitting single linear graph filters to the ideal highpass response.
struct FilterExperimentConfig {
    int train_signals = 4096;
    int val_signals = 1024;
    int probe_signals = 512;  // for the empirical response
    int batch_size = 64;
    double lr = 1e-2;
    int max_epochs = 256;
    int patience = 16;
    int iterations = 8;  // T for IIR layers
    std::uint64_t seed = 42;
};

struct FilterSpec {
    ModelKind kind = ModelKind::Iir;
    int order = 3;

    [[nodiscard]] std::string label() const;  // e.g. "iir3", "fir11"
};

struct FilterData {
    SampleSet train;
    SampleSet val;
    Eigen::MatrixXd probe_inputs;  // n x probe_signals
};

/// Gaussian vertex signals and their ideal-highpass images.
FilterData make_filter_data(const SpectralDecomposition& dec, const FilterExperimentConfig& cfg);

struct FilterResult {
    FilterSpec spec;
    Model model;
    TrainHistory history;
    std::vector<ResponseStats> response;
    double mse = 0.0;  // mean over eigenvalues of (h_mean - h_ideal)^2
};

FilterResult run_filter(const GraphOperators& ops, const SpectralDecomposition& dec, const FilterData& data,
                        const FilterSpec& spec, const FilterExperimentConfig& cfg);

/// Mean squared deviation from the ideal highpass over the defined indices.
double response_mse(const SpectralDecomposition& dec, const std::vector<ResponseStats>& response);

/// Model outputs for n x m column signals.
Eigen::MatrixXd filter_signals(const Model& model, const GraphOperators& ops, const Eigen::MatrixXd& inputs);

/// lambda_index, lambda, h_ideal, h_mean, h_p10, h_p90 rows.
void write_response_csv(const std::string& path, const SpectralDecomposition& dec,
                        const std::vector<ResponseStats>& response);
void write_ideal_csv(const std::string& path, const SpectralDecomposition& dec);

}  // namespace gridloc

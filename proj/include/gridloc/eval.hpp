#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridloc/dataset.hpp"
#include "gridloc/model.hpp"

namespace gridloc {

using BinaryMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
using BinaryVector = Eigen::VectorXi;

struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

ConfusionCounts confusion(const BinaryVector& pred, const BinaryVector& truth);

/// 2TP / (2TP + FP + FN). An all-zero truth scores 1 if the prediction is
/// all-zero too and 0 otherwise.
double f1_score(const BinaryVector& pred, const BinaryVector& truth);

inline constexpr double kAcceptableF1 = 0.90;

struct F1Report {
    std::vector<double> f1;  // per sample (SW) or per bus (BW)
    double acceptable_ratio = 0.0;
    double threshold = kAcceptableF1;
    ConfusionCounts totals;
};

/// One F1 per row (sample) of samples x n matrices.
F1Report sample_wise_eval(const BinaryMatrix& preds, const BinaryMatrix& truths, double threshold = kAcceptableF1);
/// One F1 per column (bus).
F1Report bus_wise_eval(const BinaryMatrix& preds, const BinaryMatrix& truths, double threshold = kAcceptableF1);

inline constexpr double kDecisionThreshold = 0.5;

/// 1 where p > threshold.
BinaryMatrix threshold_predictions(const Eigen::MatrixXd& probabilities, double threshold = kDecisionThreshold);

/// samples x n attack probabilities.
Eigen::MatrixXd predict_samples(const Model& model, const GraphOperators& ops, const std::vector<LabeledSample>& samples,
                                int chunk = 256);
BinaryMatrix truth_matrix(const std::vector<LabeledSample>& samples);

struct LatencyStats {
    double mean_ms = 0.0;
    double p95_ms = 0.0;
    std::size_t repetitions = 0;
};

inline constexpr int kLatencyWarmup = 10;

/// Wall-clock single-sample forward passes, cycling over `inputs`; the first
/// `warmup` runs are discarded. Throws if `repetitions` is zero.
LatencyStats latency_benchmark(const Model& model, const GraphOperators& ops, const std::vector<Eigen::MatrixXd>& inputs,
                               std::size_t repetitions, int warmup = kLatencyWarmup);

}  // namespace gridloc

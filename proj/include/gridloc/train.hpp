#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "gridloc/model.hpp"

namespace gridloc {

/// Stacked samples: inputs are (count * rows_per_sample) x c_in, targets
/// (count * rows_per_sample) x c_out, sample s occupying rows s * rows_per_sample ...
struct SampleSet {
    Tensor2 inputs;
    Tensor2 targets;
    Eigen::Index rows_per_sample = 0;

    [[nodiscard]] std::size_t count() const {
        return rows_per_sample == 0 ? 0 : static_cast<std::size_t>(inputs.rows() / rows_per_sample);
    }
    void gather(const std::vector<std::size_t>& indices, Tensor2& x, Tensor2& y) const;
};

struct TrainConfig {
    int batch_size = 256;
    int max_epochs = 256;
    int patience = 16;
    double lr = 1e-3;
    std::uint64_t seed = 42;
    LossKind loss = LossKind::BinaryCrossEntropy;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
};

/// One Adam update from the gradients currently stored in `params`.
void adam_step(const std::vector<Param*>& params, AdamState& state, double lr);

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    bool early_stopped = false;
};

class TrainingError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Loss of `model` over a whole set, evaluated in chunks of `chunk` samples.
double evaluate_loss(const Model& model, const GraphContext& g, const SampleSet& set, LossKind loss,
                     int chunk = 256);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam with a seeded per-epoch shuffle. Stops after `patience`
/// epochs without a strictly lower validation loss (or at max_epochs) and
/// leaves the best-validation parameters in `model`.
TrainHistory train(Model& model, const GraphContext& g, const SampleSet& train_set, const SampleSet& val_set,
                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace gridloc

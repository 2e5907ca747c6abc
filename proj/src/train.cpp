#include "gridloc/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gridloc {

void SampleSet::gather(const std::vector<std::size_t>& indices, Tensor2& x, Tensor2& y) const {
    const auto rows = rows_per_sample;
    const auto count = static_cast<Eigen::Index>(indices.size());
    x.resize(count * rows, inputs.cols());
    y.resize(count * rows, targets.cols());
    for (Eigen::Index b = 0; b < count; ++b) {
        const auto src = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(b)]) * rows;
        x.middleRows(b * rows, rows) = inputs.middleRows(src, rows);
        y.middleRows(b * rows, rows) = targets.middleRows(src, rows);
    }
}

void adam_step(const std::vector<Param*>& params, AdamState& state, double lr) {
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto* p : params) {
        p->m = state.beta1 * p->m + (1.0 - state.beta1) * p->grad;
        p->v = state.beta2 * p->v + (1.0 - state.beta2) * p->grad.cwiseAbs2();
        p->value.array() -= lr * (p->m.array() / c1) / ((p->v.array() / c2).sqrt() + state.epsilon);
    }
}

double evaluate_loss(const Model& model, const GraphContext& g, const SampleSet& set, LossKind loss, int chunk) {
    const std::size_t n = set.count();
    if (n == 0) throw std::invalid_argument("evaluate_loss: empty set");
    double total = 0.0;
    std::vector<std::size_t> idx;
    Tensor2 x, y;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(chunk)) {
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(chunk));
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        set.gather(idx, x, y);
        const Tensor2 out = model.predict(g, x);
        const double l = loss == LossKind::BinaryCrossEntropy ? bce_loss(out, y) : mse_loss(out, y);
        total += l * static_cast<double>(end - start);
    }
    return total / static_cast<double>(n);
}

TrainHistory train(Model& model, const GraphContext& g, const SampleSet& train_set, const SampleSet& val_set,
                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
    if (train_set.count() == 0 || val_set.count() == 0) throw std::invalid_argument("train: empty split");
    if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.patience < 1 || !(cfg.lr > 0.0)) {
        throw std::invalid_argument("train: batch_size, max_epochs, patience and lr must be positive");
    }
    for (auto* p : model.params()) {
        p->m.setZero();
        p->v.setZero();
    }
    AdamState adam;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_set.count());
    std::iota(order.begin(), order.end(), 0);

    TrainHistory history;
    history.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<Eigen::MatrixXd> best = model.snapshot();
    int since_best = 0;
    std::vector<std::size_t> batch;
    Tensor2 x, y;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double train_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
            train_set.gather(batch, x, y);
            double l = 0.0;
            try {
                l = model.loss_and_gradients(g, x, y, cfg.loss);
            } catch (const std::runtime_error& e) {
                throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            if (!std::isfinite(l)) throw TrainingError("training loss is NaN at epoch " + std::to_string(epoch));
            train_total += l * static_cast<double>(end - start);
            adam_step(model.params(), adam, cfg.lr);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_total / static_cast<double>(order.size());
        try {
            rec.val_loss = evaluate_loss(model, g, val_set, cfg.loss, std::max(cfg.batch_size, 256));
        } catch (const std::runtime_error& e) {
            throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        if (!std::isfinite(rec.val_loss)) {
            throw TrainingError("validation loss is NaN at epoch " + std::to_string(epoch));
        }
        history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_loss < history.best_val_loss) {
            history.best_val_loss = rec.val_loss;
            history.best_epoch = epoch;
            best = model.snapshot();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            history.early_stopped = true;
            break;
        }
    }
    model.restore(best);
    return history;
}

}  // namespace gridloc

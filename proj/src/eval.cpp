#include "gridloc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "gridloc/spectral.hpp"

namespace gridloc {

namespace {

F1Report summarize(std::vector<double> f1, const ConfusionCounts& totals, double threshold) {
    F1Report r;
    r.threshold = threshold;
    r.totals = totals;
    const auto ok = std::count_if(f1.begin(), f1.end(), [&](double v) { return v >= threshold; });
    r.acceptable_ratio = f1.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(f1.size());
    r.f1 = std::move(f1);
    return r;
}

void add(ConfusionCounts& a, const ConfusionCounts& b) {
    a.tp += b.tp;
    a.fp += b.fp;
    a.tn += b.tn;
    a.fn += b.fn;
}

void check_shapes(const BinaryMatrix& preds, const BinaryMatrix& truths) {
    if (preds.rows() != truths.rows() || preds.cols() != truths.cols()) {
        throw std::invalid_argument("prediction and truth shapes differ");
    }
}

}  // namespace

ConfusionCounts confusion(const BinaryVector& pred, const BinaryVector& truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("f1_score: length mismatch");
    ConfusionCounts c;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const bool p = pred(i) != 0;
        const bool t = truth(i) != 0;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double f1_score(const BinaryVector& pred, const BinaryVector& truth) {
    const auto c = confusion(pred, truth);
    if (c.tp + c.fn == 0) return c.fp == 0 ? 1.0 : 0.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

F1Report sample_wise_eval(const BinaryMatrix& preds, const BinaryMatrix& truths, double threshold) {
    check_shapes(preds, truths);
    std::vector<double> f1(static_cast<std::size_t>(preds.rows()));
    ConfusionCounts totals;
    for (Eigen::Index r = 0; r < preds.rows(); ++r) {
        const BinaryVector p = preds.row(r).transpose();
        const BinaryVector t = truths.row(r).transpose();
        add(totals, confusion(p, t));
        f1[static_cast<std::size_t>(r)] = f1_score(p, t);
    }
    return summarize(std::move(f1), totals, threshold);
}

F1Report bus_wise_eval(const BinaryMatrix& preds, const BinaryMatrix& truths, double threshold) {
    check_shapes(preds, truths);
    std::vector<double> f1(static_cast<std::size_t>(preds.cols()));
    ConfusionCounts totals;
    for (Eigen::Index c = 0; c < preds.cols(); ++c) {
        const BinaryVector p = preds.col(c);
        const BinaryVector t = truths.col(c);
        add(totals, confusion(p, t));
        f1[static_cast<std::size_t>(c)] = f1_score(p, t);
    }
    return summarize(std::move(f1), totals, threshold);
}

BinaryMatrix threshold_predictions(const Eigen::MatrixXd& probabilities, double threshold) {
    return (probabilities.array() > threshold).cast<int>().matrix();
}

Eigen::MatrixXd predict_samples(const Model& model, const GraphOperators& ops, const std::vector<LabeledSample>& samples,
                                int chunk) {
    const auto n = static_cast<Eigen::Index>(ops.n);
    const auto count = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd out(count, n);
    const auto g = make_context(ops);
    for (Eigen::Index start = 0; start < count; start += chunk) {
        const auto len = std::min<Eigen::Index>(chunk, count - start);
        Tensor2 x(len * n, 2);
        for (Eigen::Index s = 0; s < len; ++s) x.middleRows(s * n, n) = samples[static_cast<std::size_t>(start + s)].X;
        const Tensor2 p = model.predict(g, x);
        for (Eigen::Index s = 0; s < len; ++s) out.row(start + s) = p.middleRows(s * n, n).col(0).transpose();
    }
    return out;
}

BinaryMatrix truth_matrix(const std::vector<LabeledSample>& samples) {
    if (samples.empty()) return {};
    BinaryMatrix t(static_cast<Eigen::Index>(samples.size()), samples.front().y.size());
    for (std::size_t s = 0; s < samples.size(); ++s) {
        t.row(static_cast<Eigen::Index>(s)) = samples[s].y.cast<int>().transpose();
    }
    return t;
}

LatencyStats latency_benchmark(const Model& model, const GraphOperators& ops, const std::vector<Eigen::MatrixXd>& inputs,
                               std::size_t repetitions, int warmup) {
    if (repetitions == 0) throw std::invalid_argument("no measurements");
    if (inputs.empty()) throw std::invalid_argument("latency_benchmark: no inputs");
    const auto g = make_context(ops);
    using clock = std::chrono::steady_clock;
    volatile double sink = 0.0;
    std::vector<double> ms;
    ms.reserve(repetitions);
    const auto total = repetitions + static_cast<std::size_t>(std::max(warmup, 0));
    for (std::size_t r = 0; r < total; ++r) {
        const auto& x = inputs[r % inputs.size()];
        const auto t0 = clock::now();
        const Tensor2 p = model.predict(g, x);
        const auto t1 = clock::now();
        sink = sink + p(0, 0);
        if (r >= total - repetitions) ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    LatencyStats s;
    s.repetitions = ms.size();
    double sum = 0.0;
    for (double v : ms) sum += v;
    s.mean_ms = sum / static_cast<double>(ms.size());
    s.p95_ms = percentile(ms, 0.95);
    return s;
}

}  // namespace gridloc

#include "gridloc/filter_experiment.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "gridloc/seeding.hpp"

namespace gridloc {

namespace {

constexpr std::uint64_t kSignalStream = 20;
constexpr std::uint64_t kFilterInitStream = 21;

Eigen::MatrixXd gaussian_signals(Eigen::Index n, Eigen::Index m, std::mt19937_64& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd X(n, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = unit(rng);
    }
    return X;
}

SampleSet as_sample_set(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    SampleSet s;
    s.rows_per_sample = X.rows();
    // n x m column-major is already the stacked (m * n) x 1 layout.
    s.inputs = Eigen::Map<const Eigen::MatrixXd>(X.data(), X.size(), 1);
    s.targets = Eigen::Map<const Eigen::MatrixXd>(Y.data(), Y.size(), 1);
    return s;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string FilterSpec::label() const {
    return to_string(kind) + std::to_string(order);
}

FilterData make_filter_data(const SpectralDecomposition& dec, const FilterExperimentConfig& cfg) {
    if (cfg.train_signals < 1 || cfg.val_signals < 1 || cfg.probe_signals < 1) {
        throw std::invalid_argument("filter experiment: signal counts must be positive");
    }
    const double lmax = dec.lambda_max();
    const auto h = [lmax](double l) { return ideal_highpass_response(l, lmax); };
    std::mt19937_64 rng(derive_seed(cfg.seed, kSignalStream));
    const auto n = dec.size();
    FilterData d;
    const Eigen::MatrixXd xt = gaussian_signals(n, cfg.train_signals, rng);
    d.train = as_sample_set(xt, apply_spectral_filter(dec, h, xt));
    const Eigen::MatrixXd xv = gaussian_signals(n, cfg.val_signals, rng);
    d.val = as_sample_set(xv, apply_spectral_filter(dec, h, xv));
    d.probe_inputs = gaussian_signals(n, cfg.probe_signals, rng);
    return d;
}

Eigen::MatrixXd filter_signals(const Model& model, const GraphOperators& ops, const Eigen::MatrixXd& inputs) {
    const Tensor2 x = Eigen::Map<const Eigen::MatrixXd>(inputs.data(), inputs.size(), 1);
    const Tensor2 y = model.predict(make_context(ops), x);
    return Eigen::Map<const Eigen::MatrixXd>(y.data(), inputs.rows(), inputs.cols());
}

double response_mse(const SpectralDecomposition& dec, const std::vector<ResponseStats>& response) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < response.size(); ++i) {
        if (!response[i].mean) continue;
        const double d = *response[i].mean - ideal_highpass_response(response[i].lambda, dec.lambda_max());
        sum += d * d;
        ++count;
    }
    if (count == 0) throw std::runtime_error("response_mse: no defined response");
    return sum / static_cast<double>(count);
}

FilterResult run_filter(const GraphOperators& ops, const SpectralDecomposition& dec, const FilterData& data,
                        const FilterSpec& spec, const FilterExperimentConfig& cfg) {
    FilterResult r;
    r.spec = spec;
    r.model = Model::single_filter(spec.kind, spec.order, cfg.iterations,
                                   derive_seed(cfg.seed, kFilterInitStream, static_cast<std::uint64_t>(spec.order)));
    TrainConfig tc;
    tc.batch_size = cfg.batch_size;
    tc.max_epochs = cfg.max_epochs;
    tc.patience = cfg.patience;
    tc.lr = cfg.lr;
    tc.seed = cfg.seed;
    tc.loss = LossKind::MeanSquaredError;
    r.history = train(r.model, make_context(ops), data.train, data.val, tc);
    r.response = empirical_frequency_response(dec, data.probe_inputs, filter_signals(r.model, ops, data.probe_inputs));
    r.mse = response_mse(dec, r.response);
    return r;
}

void write_response_csv(const std::string& path, const SpectralDecomposition& dec,
                        const std::vector<ResponseStats>& response) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "lambda_index,lambda,h_ideal,h_mean,h_p10,h_p90\n";
    const auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
    for (std::size_t i = 0; i < response.size(); ++i) {
        const auto& s = response[i];
        out << i << ',' << fmt(s.lambda) << ',' << fmt(ideal_highpass_response(s.lambda, dec.lambda_max())) << ','
            << opt(s.mean) << ',' << opt(s.p10) << ',' << opt(s.p90) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

void write_ideal_csv(const std::string& path, const SpectralDecomposition& dec) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "lambda_index,lambda,h_ideal\n";
    for (Eigen::Index i = 0; i < dec.size(); ++i) {
        const double l = dec.eigenvalues(i);
        out << i << ',' << fmt(l) << ',' << fmt(ideal_highpass_response(l, dec.lambda_max())) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace gridloc

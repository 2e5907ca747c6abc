#include "gridloc/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "gridloc/checkpoint.hpp"
#include "gridloc/config.hpp"
#include "gridloc/dataset.hpp"
#include "gridloc/eval.hpp"
#include "gridloc/filter_experiment.hpp"
#include "gridloc/spectral.hpp"

namespace gridloc {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_run_manifest(const RunConfig& cfg, const std::string& command, const nlohmann::json& extra = {}) {
    ensure_dir(cfg.out_dir);
    nlohmann::json m = {{"command", command},
                        {"timestamp", utc_timestamp()},
                        {"config", config_to_json(cfg)},
                        {"seeds", {{"base", cfg.seed}}}};
    if (!extra.is_null()) m["results"] = extra;
    open_out(fs::path(cfg.out_dir) / ("manifest_" + command + ".json")) << m.dump(2) << '\n';
}

struct Loaded {
    GridCase grid;
    GraphOperators ops;
};

Loaded load_grid(const RunConfig& cfg) {
    Loaded l{load_case_file(cfg.case_path), {}};
    l.ops = build_graph_operators(l.grid);
    return l;
}

// ------------------------------------------------------------ subcommands

int cmd_case_info(const RunConfig& cfg, std::ostream& out) {
    const auto l = load_grid(cfg);
    const auto dec = eigendecompose(l.ops.L);
    std::size_t in_service = 0;
    for (const auto& b : l.grid.branches) in_service += b.in_service ? 1 : 0;
    out << "case: " << l.grid.name << '\n'
        << "buses: " << l.grid.size() << '\n'
        << "branches: " << l.grid.branches.size() << " (" << in_service << " in service)\n"
        << "generators: " << l.grid.generators.size() << '\n'
        << "base_mva: " << l.grid.base_mva << '\n'
        << "slack_bus: " << l.grid.buses[l.grid.slack_index()].id << '\n'
        << "lambda_max: " << fmt(dec.lambda_max()) << '\n';
    return kExitOk;
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto l = load_grid(cfg);
    const PowerNetwork net(l.grid);
    DatasetConfig dc;
    dc.horizon = cfg.horizon;
    dc.noise_pct = cfg.noise_pct;
    dc.seed = cfg.seed;
    dc.mix.train_val = cfg.attacks_train;
    dc.mix.test = cfg.attacks_test;
    dc.mix.region_min = static_cast<std::size_t>(cfg.region_min);
    dc.mix.region_max = static_cast<std::size_t>(cfg.region_max);
    dc.mix.budget = cfg.budget;
    dc.mix.steps = cfg.attack_steps;
    err << "generating " << cfg.horizon << " timestamps on " << l.grid.name << '\n';
    const auto bundle = build_dataset(net, l.ops, dc);
    save_dataset(cfg.resolved_data_dir(), bundle);
    write_run_manifest(cfg, "gen-data", bundle.manifest.at("counts"));
    out << "train " << bundle.train.size() << ", val " << bundle.val.size() << ", test " << bundle.test.size()
        << " samples written to " << cfg.resolved_data_dir() << '\n';
    if (bundle.manifest.at("skipped_timestamps").get<std::size_t>() > 0) {
        err << "skipped " << bundle.manifest.at("skipped_timestamps") << " non-converged timestamps\n";
    }
    return kExitOk;
}

DatasetBundle load_matching_dataset(const RunConfig& cfg, const Loaded& l) {
    auto bundle = load_dataset(cfg.resolved_data_dir());
    if (bundle.bus_ids.size() != l.grid.size()) {
        throw std::runtime_error("dataset in " + cfg.resolved_data_dir() + " was built for " + bundle.case_name +
                                 ", not " + l.grid.name);
    }
    return bundle;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto l = load_grid(cfg);
    const auto bundle = load_matching_dataset(cfg, l);
    auto model = Model::localizer(model_config(cfg), static_cast<Eigen::Index>(l.grid.size()), cfg.seed);
    TrainConfig tc;
    tc.batch_size = cfg.batch_size;
    tc.max_epochs = cfg.max_epochs;
    tc.patience = cfg.patience;
    tc.lr = cfg.lr;
    tc.seed = cfg.seed;
    const auto history = train(model, make_context(l.ops), to_sample_set(bundle.train), to_sample_set(bundle.val), tc,
                               [&](const EpochRecord& e) {
                                   err << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss
                                       << '\n';
                               });
    ensure_dir(cfg.out_dir);
    save_checkpoint(cfg.resolved_checkpoint(), model, config_to_json(cfg), history);
    auto csv = open_out(fs::path(cfg.out_dir) / "train_history.csv");
    csv << "epoch,train_loss,val_loss\n";
    for (const auto& e : history.epochs) csv << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.val_loss) << '\n';
    write_run_manifest(cfg, "train",
                       {{"best_epoch", history.best_epoch},
                        {"best_val_loss", history.best_val_loss},
                        {"epochs", history.epochs.size()},
                        {"parameters", model.parameter_count()}});
    out << to_string(cfg.model) << " model: best epoch " << history.best_epoch << ", val loss "
        << fmt(history.best_val_loss) << ", saved " << cfg.resolved_checkpoint() << '\n';
    return kExitOk;
}

nlohmann::json report_json(const F1Report& r) {
    double mean = 0.0;
    for (double v : r.f1) mean += v;
    if (!r.f1.empty()) mean /= static_cast<double>(r.f1.size());
    return {{"acceptable_ratio", r.acceptable_ratio},
            {"mean_f1", mean},
            {"units", r.f1.size()},
            {"tp", r.totals.tp},
            {"fp", r.totals.fp},
            {"tn", r.totals.tn},
            {"fn", r.totals.fn}};
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto l = load_grid(cfg);
    const auto bundle = load_matching_dataset(cfg, l);
    const auto ck = load_checkpoint(cfg.resolved_checkpoint());
    const auto& test = bundle.test;
    if (test.empty()) throw std::runtime_error("test split is empty");

    const auto probs = predict_samples(ck.model, l.ops, test);
    const auto preds = threshold_predictions(probs);
    const auto truths = truth_matrix(test);
    const auto sw = sample_wise_eval(preds, truths, cfg.threshold);
    const auto bw = bus_wise_eval(preds, truths, cfg.threshold);

    // SW acceptable ratio per sample kind.
    nlohmann::json per_kind = nlohmann::json::object();
    std::map<std::string, std::pair<int, int>> tally;
    for (std::size_t s = 0; s < test.size(); ++s) {
        auto& [ok, total] = tally[test[s].kind ? to_string(*test[s].kind) : "clean"];
        ok += sw.f1[s] >= cfg.threshold ? 1 : 0;
        ++total;
    }
    for (const auto& [kind, t] : tally) {
        per_kind[kind] = {{"samples", t.second}, {"acceptable_ratio", static_cast<double>(t.first) / t.second}};
    }

    ensure_dir(cfg.out_dir);
    const std::string model_name = ck.config.value("model", std::string("?"));
    const nlohmann::json metrics = {{"case", l.grid.name},
                                    {"model", model_name},
                                    {"threshold", cfg.threshold},
                                    {"test_samples", test.size()},
                                    {"sample_wise", report_json(sw)},
                                    {"bus_wise", report_json(bw)},
                                    {"sample_wise_by_kind", per_kind}};
    open_out(fs::path(cfg.out_dir) / "metrics.json") << metrics.dump(2) << '\n';
    {
        auto csv = open_out(fs::path(cfg.out_dir) / "sw_f1.csv");
        csv << "sample,t,attack_kind,f1\n";
        for (std::size_t s = 0; s < test.size(); ++s) {
            csv << s << ',' << test[s].t << ',' << (test[s].kind ? to_string(*test[s].kind) : "clean") << ','
                << fmt(sw.f1[s]) << '\n';
        }
    }
    {
        auto csv = open_out(fs::path(cfg.out_dir) / "bw_f1.csv");
        csv << "bus_index,bus_id,f1\n";
        for (std::size_t b = 0; b < bw.f1.size(); ++b) csv << b << ',' << bundle.bus_ids[b] << ',' << fmt(bw.f1[b]) << '\n';
    }
    std::vector<Eigen::MatrixXd> inputs;
    for (std::size_t s = 0; s < std::min<std::size_t>(test.size(), 64); ++s) inputs.push_back(test[s].X);
    const auto lat = latency_benchmark(ck.model, l.ops, inputs, static_cast<std::size_t>(cfg.latency_reps));
    {
        auto csv = open_out(fs::path(cfg.out_dir) / "latency.csv");
        csv << "model,buses,mean_ms,p95_ms,repetitions\n";
        csv << model_name << ',' << l.grid.size() << ',' << fmt(lat.mean_ms) << ',' << fmt(lat.p95_ms) << ','
            << lat.repetitions << '\n';
    }
    write_run_manifest(cfg, "eval", metrics);
    out << "SW acceptable ratio " << fmt(sw.acceptable_ratio) << ", BW acceptable ratio " << fmt(bw.acceptable_ratio)
        << ", latency " << lat.mean_ms << " ms\n";
    err << "reports written to " << cfg.out_dir << '\n';
    return kExitOk;
}

FilterSpec parse_filter(const std::string& label) {
    FilterSpec s;
    s.kind = model_kind_from_string(label.substr(0, 3));
    s.order = std::stoi(label.substr(3));
    return s;
}

int cmd_freq_response(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto l = load_grid(cfg);
    const auto dec = eigendecompose(l.ops.L);
    FilterExperimentConfig fc;
    fc.train_signals = cfg.train_signals;
    fc.val_signals = cfg.val_signals;
    fc.probe_signals = cfg.probe_signals;
    fc.batch_size = cfg.filter_batch;
    fc.lr = cfg.filter_lr;
    fc.max_epochs = cfg.filter_epochs;
    fc.patience = cfg.patience;
    fc.iterations = cfg.iterations;
    fc.seed = cfg.seed;
    const auto data = make_filter_data(dec, fc);
    ensure_dir(cfg.out_dir);
    write_ideal_csv((fs::path(cfg.out_dir) / "freq_ideal.csv").string(), dec);
    nlohmann::json summary = nlohmann::json::object();
    for (const auto& label : cfg.filters) {
        const auto spec = parse_filter(label);
        err << "fitting " << spec.label() << '\n';
        const auto r = run_filter(l.ops, dec, data, spec, fc);
        write_response_csv((fs::path(cfg.out_dir) / ("freq_" + spec.label() + ".csv")).string(), dec, r.response);
        summary[spec.label()] = {{"mse", r.mse}, {"best_epoch", r.history.best_epoch}, {"epochs", r.history.epochs.size()}};
        out << spec.label() << " mse " << fmt(r.mse) << '\n';
    }
    open_out(fs::path(cfg.out_dir) / "freq_summary.json") << summary.dump(2) << '\n';
    write_run_manifest(cfg, "freq-response", summary);
    return kExitOk;
}

int cmd_attack_preview(const RunConfig& cfg, std::ostream& out) {
    const auto l = load_grid(cfg);
    const PowerNetwork net(l.grid);
    const auto t = static_cast<std::size_t>(cfg.timestamp);
    const auto profile = synthesize_load_profiles(cfg.timestamp + 1, net.bus_count(), cfg.seed);
    const auto clean = generate_clean_dataset(net, profile, cfg.noise_pct, cfg.seed);
    if (clean.samples.size() != t + 1) throw std::runtime_error("power flow failed inside the preview window");
    if (static_cast<std::size_t>(cfg.region_size) > net.bus_count()) throw UsageError("region_size exceeds bus count");

    const auto region = select_target_region(l.ops, static_cast<std::size_t>(cfg.region_size), cfg.seed);
    const auto& cs = clean.samples[t];
    MeasurementSet z;
    switch (cfg.attack) {
        case AttackKind::Replay: {
            std::vector<MeasurementSet> history;
            for (const auto& s : clean.samples) history.push_back(s.z);
            z = replay_attack(net, history, t, region, cfg.seed);
            break;
        }
        case AttackKind::Scale:
            z = scale_attack(net, cs.z, region, cfg.seed);
            break;
        case AttackKind::Distribution: {
            std::vector<const MeasurementSet*> history;
            for (const auto& s : clean.samples) history.push_back(&s.z);
            z = distribution_attack(net, cs.z, measurement_stats(history), region, cfg.seed);
            break;
        }
        case AttackKind::Optimization: {
            OptimizationAttackOptions opts;
            opts.budget = cfg.budget;
            opts.steps = cfg.attack_steps;
            opts.noise_pct = cfg.noise_pct;
            opts.noise_seed = cs.noise_seed;
            z = optimization_attack(net, cs.solution, region, opts, cfg.seed).attacked;
            break;
        }
    }

    const auto& buses = l.grid.buses;
    out << "# case " << l.grid.name << ", kind " << to_string(cfg.attack) << ", t " << t << ", region";
    for (auto b : region) out << ' ' << buses[b].id;
    out << '\n' << "index,quantity,element,clean,attacked,delta\n";
    const Eigen::VectorXd before = cs.z.stacked();
    const Eigen::VectorXd after = z.stacked();
    const auto n = net.bus_count();
    const auto m = net.flow_count();
    for (Eigen::Index k = 0; k < before.size(); ++k) {
        const auto idx = static_cast<std::size_t>(k);
        std::string quantity;
        std::string element;
        if (idx < 2 * n) {
            quantity = idx < n ? "p_inj" : "q_inj";
            element = std::to_string(buses[idx % n].id);
        } else {
            const auto f = (idx - 2 * n) % m;
            quantity = idx < 2 * n + m ? "p_flow" : "q_flow";
            const auto& fl = net.flows()[f];
            element = std::to_string(buses[fl.at].id) + "-" + std::to_string(buses[fl.other].id);
        }
        out << k << ',' << quantity << ',' << element << ',' << fmt(before(k)) << ',' << fmt(after(k)) << ','
            << fmt(after(k) - before(k)) << '\n';
    }
    return kExitOk;
}

// ------------------------------------------------------------ parsing

struct Command {
    std::string name;
    std::string help;
    std::vector<std::string> keys;
};

const std::vector<Command>& commands() {
    static const std::vector<Command> c = {
        {"case-info", "summarize a case file", {"case"}},
        {"gen-data",
         "synthesize loads, run power flows, inject attacks and write the dataset",
         {"case", "out", "data", "horizon", "noise_pct", "region_min", "region_max", "budget", "attack_steps",
          "attacks_train", "attacks_test", "seed"}},
        {"train",
         "train a localization model on a generated dataset",
         {"case", "out", "data", "checkpoint", "model", "order", "iterations", "layers", "channels", "fcn_hidden", "lr",
          "batch_size", "max_epochs", "patience", "seed"}},
        {"eval", "score a checkpoint on the test split", {"case", "out", "data", "checkpoint", "threshold", "latency_reps"}},
        {"freq-response",
         "fit single IIR/FIR filters to the ideal highpass and write their empirical responses",
         {"case", "out", "filters", "iterations", "train_signals", "val_signals", "probe_signals", "filter_batch",
          "filter_lr", "filter_epochs", "patience", "seed"}},
        {"attack-preview",
         "print one attacked measurement set as CSV",
         {"case", "attack", "timestamp", "region_size", "seed", "noise_pct", "budget", "attack_steps"}},
    };
    return c;
}

std::string key_help(const std::string& key) {
    for (const auto& k : config_keys()) {
        if (k.name == key) return k.help;
    }
    return {};
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    if (const char* threads = std::getenv("GRIDLOC_THREADS")) {
        const int t = std::atoi(threads);
        if (t > 0) Eigen::setNbThreads(t);
    }

    CLI::App app{"Attack localization with graph filters on power grids", "gridloc"};
    app.require_subcommand(1);
    std::map<std::string, std::string> config_files;
    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::map<std::string, CLI::Option*>> options;
    for (const auto& c : commands()) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_files[c.name], "key = value config file")->check(CLI::ExistingFile);
        for (const auto& key : c.keys) {
            options[c.name][key] = sub->add_option("--" + dashed(key), values[c.name][key], key_help(key));
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitOk;
        }
        err << "gridloc: " << e.what() << '\n';
        return kExitUsage;
    }

    const auto* chosen = app.get_subcommands().front();
    const std::string name = chosen->get_name();
    RunConfig cfg;
    try {
        if (!config_files[name].empty()) load_config_file(cfg, config_files[name]);
        for (const auto& [key, opt] : options[name]) {
            if (opt->count() > 0) set_config_value(cfg, key, values[name][key]);
        }
        validate_config(cfg);
    } catch (const ConfigError& e) {
        err << "gridloc: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (name == "case-info") return cmd_case_info(cfg, out);
        if (name == "gen-data") return cmd_gen_data(cfg, out, err);
        if (name == "train") return cmd_train(cfg, out, err);
        if (name == "eval") return cmd_eval(cfg, out, err);
        if (name == "freq-response") return cmd_freq_response(cfg, out, err);
        if (name == "attack-preview") return cmd_attack_preview(cfg, out);
    } catch (const UsageError& e) {
        err << "gridloc " << name << ": " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "gridloc " << name << ": " << e.what() << '\n';
        return kExitFailure;
    }
    err << "gridloc: unknown subcommand " << name << '\n';
    return kExitUsage;
}

}  // namespace gridloc

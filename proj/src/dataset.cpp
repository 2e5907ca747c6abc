#include "gridloc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "gridloc/seeding.hpp"

namespace gridloc {

namespace {

// derive_seed streams
constexpr std::uint64_t kProfileStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kSplitStream = 3;
constexpr std::uint64_t kAttackPickStream = 4;
constexpr std::uint64_t kAttackStream = 5;
constexpr std::uint64_t kShuffleStream = 6;

Eigen::MatrixXd injection_features(const MeasurementSet& z) {
    Eigen::MatrixXd X(z.p_inj.size(), 2);
    X.col(0) = z.p_inj;
    X.col(1) = z.q_inj;
    return X;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.size();
    const auto cols = rows == 0 ? 0 : j.at(0).size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
    }
    return m;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        j.push_back(row);
    }
    return j;
}

nlohmann::json split_counts(const std::vector<LabeledSample>& samples) {
    nlohmann::json j = {{"total", samples.size()}, {"clean", 0}};
    for (auto k : {AttackKind::Replay, AttackKind::Scale, AttackKind::Distribution, AttackKind::Optimization}) {
        j[to_string(k)] = 0;
    }
    for (const auto& s : samples) {
        const auto key = s.kind ? to_string(*s.kind) : std::string("clean");
        j[key] = j[key].get<int>() + 1;
    }
    return j;
}

}  // namespace

LoadProfile synthesize_load_profiles(int horizon, std::size_t buses, std::uint64_t seed,
                                     const LoadProfileConfig& cfg) {
    if (horizon <= 0) throw std::invalid_argument("synthesize_load_profiles: horizon must be positive");
    if (buses == 0) throw std::invalid_argument("synthesize_load_profiles: no buses");
    std::mt19937_64 rng(derive_seed(seed, kProfileStream));
    std::normal_distribution<double> unit(0.0, 1.0);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    LoadProfile p;
    p.system.resize(static_cast<std::size_t>(horizon));
    p.multipliers.resize(horizon, static_cast<Eigen::Index>(buses));
    double ar = 0.0;
    for (int t = 0; t < horizon; ++t) {
        if (cfg.system_jitter > 0.0) ar = cfg.ar_coefficient * ar + cfg.system_jitter * unit(rng);
        const double level = cfg.base_level +
                             cfg.daily_amplitude * std::sin(two_pi * t / kMinutesPerDay + cfg.daily_phase) +
                             cfg.weekly_amplitude * std::sin(two_pi * t / kMinutesPerWeek) + ar;
        const double sys = std::clamp(level, kMultiplierMin, kMultiplierMax);
        p.system[static_cast<std::size_t>(t)] = sys;
        for (Eigen::Index i = 0; i < p.multipliers.cols(); ++i) {
            const double jitter = cfg.bus_jitter > 0.0 ? cfg.bus_jitter * unit(rng) : 0.0;
            p.multipliers(t, i) = std::clamp(sys + jitter, kMultiplierMin, kMultiplierMax);
        }
    }
    return p;
}

CleanDataset generate_clean_dataset(const PowerNetwork& net, const LoadProfile& profile, double noise_pct,
                                    std::uint64_t seed) {
    const auto n = net.bus_count();
    if (static_cast<std::size_t>(profile.multipliers.cols()) != n) {
        throw std::invalid_argument("generate_clean_dataset: profile does not match the bus count");
    }
    const auto base = case_loads(net.grid());
    CleanDataset out;
    out.samples.reserve(profile.horizon());
    std::vector<BusLoad> loads(n);
    for (std::size_t t = 0; t < profile.horizon(); ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const double k = profile.multipliers(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
            loads[i] = {base[i].p_mw * k, base[i].q_mvar * k};
        }
        CleanSample s;
        s.t = t;
        try {
            s.solution = solve_ac_powerflow(net, loads);
        } catch (const PowerFlowError&) {
            ++out.skipped;
            continue;
        }
        s.noise_seed = derive_seed(seed, kNoiseStream, t);
        s.z = compute_measurements(net, s.solution, noise_pct, s.noise_seed);
        out.samples.push_back(std::move(s));
    }
    if (static_cast<double>(out.skipped) > 0.05 * static_cast<double>(profile.horizon())) {
        throw std::runtime_error("power flow failed at " + std::to_string(out.skipped) + " of " +
                                 std::to_string(profile.horizon()) + " timestamps; check the load profile");
    }
    return out;
}

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

std::vector<Split> assign_splits(std::size_t count, std::uint64_t seed) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, kSplitStream));
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t sixth = count / 6;
    std::vector<Split> out(count, Split::Train);
    for (std::size_t k = 0; k < sixth; ++k) {
        out[order[k]] = Split::Val;
        out[order[sixth + k]] = Split::Test;
    }
    return out;
}

std::vector<LabeledSample> inject_attacks(const PowerNetwork& net, const GraphOperators& ops,
                                          const CleanDataset& clean, const std::vector<Split>& splits,
                                          const AttackMix& mix, std::uint64_t seed) {
    const auto& cs = clean.samples;
    if (cs.empty()) throw std::invalid_argument("inject_attacks: empty clean sequence");
    if (splits.size() != cs.size()) throw std::invalid_argument("inject_attacks: split assignment size mismatch");
    if (mix.region_min < 1 || mix.region_min > mix.region_max) {
        throw std::invalid_argument("inject_attacks: bad region size range");
    }
    if (mix.train_val.empty() || mix.test.empty()) throw std::invalid_argument("inject_attacks: empty attack mix");
    const auto n = net.bus_count();

    std::vector<bool> attack(cs.size(), false);
    std::vector<const MeasurementSet*> train_clean;
    for (auto split : {Split::Train, Split::Val, Split::Test}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < cs.size(); ++i) {
            if (splits[i] == split) idx.push_back(i);
        }
        std::mt19937_64 rng(derive_seed(seed, kAttackPickStream, static_cast<std::uint64_t>(split)));
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t k = 0; k < idx.size() / 2; ++k) attack[idx[k]] = true;
        if (split == Split::Train) {
            for (auto i : idx) train_clean.push_back(&cs[i].z);
        }
    }
    const bool need_stats = std::count(mix.train_val.begin(), mix.train_val.end(), AttackKind::Distribution) > 0 ||
                            std::count(mix.test.begin(), mix.test.end(), AttackKind::Distribution) > 0;
    MeasurementStats stats;
    if (need_stats) {
        if (train_clean.empty()) throw std::invalid_argument("inject_attacks: no train samples for statistics");
        stats = measurement_stats(train_clean);
    }
    const auto history = [&](std::size_t i) -> const MeasurementSet& { return cs[i].z; };

    std::vector<LabeledSample> out(cs.size());
    for (std::size_t i = 0; i < cs.size(); ++i) {
        auto& s = out[i];
        s.t = cs[i].t;
        s.split = splits[i];
        s.y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        if (!attack[i]) {
            s.X = injection_features(cs[i].z);
            continue;
        }
        const auto& allowed = splits[i] == Split::Test ? mix.test : mix.train_val;
        std::mt19937_64 rng(derive_seed(seed, kAttackStream, i));
        AttackKind kind{};
        for (int tries = 0;; ++tries) {
            kind = allowed[std::uniform_int_distribution<std::size_t>(0, allowed.size() - 1)(rng)];
            if (kind != AttackKind::Replay || i > 0) break;
            if (tries > 64) throw std::invalid_argument("inject_attacks: cannot replay the first timestamp");
        }
        const auto hi = std::min(mix.region_max, n);
        const auto lo = std::min(mix.region_min, hi);
        const auto size = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
        const Region region = select_target_region(ops, size, rng());
        const std::uint64_t attack_seed = rng();

        MeasurementSet z;
        switch (kind) {
            case AttackKind::Replay:
                z = replay_attack(net, history, cs.size(), i, region, attack_seed);
                break;
            case AttackKind::Scale:
                z = scale_attack(net, cs[i].z, region, attack_seed);
                break;
            case AttackKind::Distribution:
                z = distribution_attack(net, cs[i].z, stats, region, attack_seed);
                break;
            case AttackKind::Optimization: {
                OptimizationAttackOptions opts;
                opts.budget = mix.budget;
                opts.steps = mix.steps;
                opts.noise_pct = mix.noise_pct;
                opts.noise_seed = cs[i].noise_seed;
                z = optimization_attack(net, cs[i].solution, region, opts, attack_seed).attacked;
                break;
            }
        }
        s.X = injection_features(z);
        s.kind = kind;
        for (auto b : region) s.y(static_cast<Eigen::Index>(b)) = 1.0;
    }
    return out;
}

Scaler Scaler::fit(const std::vector<LabeledSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("Scaler::fit: no samples");
    const auto rows = samples.front().X.rows();
    const auto cols = samples.front().X.cols();
    Scaler s;
    s.mean = Eigen::MatrixXd::Zero(rows, cols);
    for (const auto& x : samples) s.mean += x.X;
    s.mean /= static_cast<double>(samples.size());
    Eigen::MatrixXd var = Eigen::MatrixXd::Zero(rows, cols);
    for (const auto& x : samples) var += (x.X - s.mean).cwiseAbs2();
    var /= static_cast<double>(samples.size());
    s.std = var.cwiseSqrt().unaryExpr([](double v) { return v < kScalerFloor ? 1.0 : v; });
    return s;
}

void Scaler::apply(Eigen::MatrixXd& X) const {
    X = (X - mean).cwiseQuotient(std);
}

DatasetBundle assemble_splits(std::vector<LabeledSample> samples, std::uint64_t seed) {
    if (samples.size() < 6) throw std::invalid_argument("assemble_splits: need at least 6 samples");
    std::mt19937_64 rng(derive_seed(seed, kShuffleStream));
    std::shuffle(samples.begin(), samples.end(), rng);

    DatasetBundle b;
    for (auto& s : samples) {
        auto& dst = s.split == Split::Train ? b.train : (s.split == Split::Val ? b.val : b.test);
        dst.push_back(std::move(s));
    }
    if (b.train.empty() || b.val.empty() || b.test.empty()) throw std::invalid_argument("assemble_splits: empty split");
    b.scaler = Scaler::fit(b.train);
    for (auto* split : {&b.train, &b.val, &b.test}) {
        for (auto& s : *split) b.scaler.apply(s.X);
    }
    b.manifest = {{"shuffle_seed", seed},
                  {"counts", {{"train", split_counts(b.train)}, {"val", split_counts(b.val)}, {"test", split_counts(b.test)}}},
                  {"scaler", {{"mean", matrix_to_json(b.scaler.mean)}, {"std", matrix_to_json(b.scaler.std)}}}};
    return b;
}

DatasetBundle build_dataset(const PowerNetwork& net, const GraphOperators& ops, const DatasetConfig& cfg) {
    const auto profile = synthesize_load_profiles(cfg.horizon, net.bus_count(), cfg.seed, cfg.profile);
    const auto clean = generate_clean_dataset(net, profile, cfg.noise_pct, cfg.seed);
    const auto splits = assign_splits(clean.samples.size(), cfg.seed);
    AttackMix mix = cfg.mix;
    mix.noise_pct = cfg.noise_pct;
    auto bundle = assemble_splits(inject_attacks(net, ops, clean, splits, mix, cfg.seed), cfg.seed);

    bundle.case_name = net.grid().name;
    for (const auto& bus : net.grid().buses) bundle.bus_ids.push_back(bus.id);
    nlohmann::json kinds_tv = nlohmann::json::array();
    nlohmann::json kinds_test = nlohmann::json::array();
    for (auto k : mix.train_val) kinds_tv.push_back(to_string(k));
    for (auto k : mix.test) kinds_test.push_back(to_string(k));
    auto& m = bundle.manifest;
    m["format"] = "gridloc-dataset";
    m["version"] = 1;
    m["case"] = bundle.case_name;
    m["bus_ids"] = bundle.bus_ids;
    m["load_profile"] = {{"source", "synthetic"},
                         {"horizon", cfg.horizon},
                         {"base_level", cfg.profile.base_level},
                         {"daily_amplitude", cfg.profile.daily_amplitude},
                         {"weekly_amplitude", cfg.profile.weekly_amplitude},
                         {"daily_phase", cfg.profile.daily_phase},
                         {"system_jitter", cfg.profile.system_jitter},
                         {"ar_coefficient", cfg.profile.ar_coefficient},
                         {"bus_jitter", cfg.profile.bus_jitter}};
    m["noise_pct"] = cfg.noise_pct;
    m["skipped_timestamps"] = clean.skipped;
    m["attacks"] = {{"train_val", kinds_tv},
                    {"test", kinds_test},
                    {"region_min", mix.region_min},
                    {"region_max", mix.region_max},
                    {"budget", mix.budget},
                    {"steps", mix.steps},
                    {"replay_window", kReplayWindow}};
    m["seeds"] = {{"base", cfg.seed},
                  {"profile", derive_seed(cfg.seed, kProfileStream)},
                  {"split", derive_seed(cfg.seed, kSplitStream)},
                  {"shuffle", derive_seed(cfg.seed, kShuffleStream)},
                  {"noise", "derive_seed(base, 2, t)"},
                  {"attack", "derive_seed(base, 5, sample)"}};
    return bundle;
}

SampleSet to_sample_set(const std::vector<LabeledSample>& samples) {
    SampleSet set;
    if (samples.empty()) return set;
    const auto n = samples.front().X.rows();
    const auto count = static_cast<Eigen::Index>(samples.size());
    set.rows_per_sample = n;
    set.inputs.resize(count * n, samples.front().X.cols());
    set.targets.resize(count * n, 1);
    for (Eigen::Index s = 0; s < count; ++s) {
        const auto& ls = samples[static_cast<std::size_t>(s)];
        set.inputs.middleRows(s * n, n) = ls.X;
        set.targets.middleRows(s * n, n) = ls.y;
    }
    return set;
}

void save_dataset(const std::string& dir, const DatasetBundle& bundle) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
    {
        std::ofstream out(fs::path(dir) / "manifest.json");
        if (!out) throw std::runtime_error("cannot write manifest in " + dir);
        out << bundle.manifest.dump(2) << '\n';
    }
    for (const auto& [name, split] : {std::pair{"train", &bundle.train}, {"val", &bundle.val}, {"test", &bundle.test}}) {
        std::ofstream out(fs::path(dir) / (std::string(name) + ".csv"));
        if (!out) throw std::runtime_error(std::string("cannot write ") + name + ".csv in " + dir);
        out << "t,bus_id,p,q,label,attack_kind\n";
        for (const auto& s : *split) {
            const std::string kind = s.kind ? to_string(*s.kind) : "clean";
            for (Eigen::Index i = 0; i < s.X.rows(); ++i) {
                out << s.t << ',' << bundle.bus_ids.at(static_cast<std::size_t>(i)) << ',' << format_double(s.X(i, 0))
                    << ',' << format_double(s.X(i, 1)) << ',' << static_cast<int>(s.y(i)) << ',' << kind << '\n';
            }
        }
        if (!out) throw std::runtime_error(std::string("failed writing ") + name + ".csv");
    }
}

DatasetBundle load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    DatasetBundle b;
    {
        std::ifstream in(fs::path(dir) / "manifest.json");
        if (!in) throw std::runtime_error("cannot read manifest in " + dir);
        b.manifest = nlohmann::json::parse(in);
    }
    b.case_name = b.manifest.at("case").get<std::string>();
    b.bus_ids = b.manifest.at("bus_ids").get<std::vector<int>>();
    b.scaler.mean = matrix_from_json(b.manifest.at("scaler").at("mean"));
    b.scaler.std = matrix_from_json(b.manifest.at("scaler").at("std"));
    const auto n = static_cast<Eigen::Index>(b.bus_ids.size());

    for (const auto& [name, split, tag] : {std::tuple{"train", &b.train, Split::Train},
                                           {"val", &b.val, Split::Val},
                                           {"test", &b.test, Split::Test}}) {
        const auto path = fs::path(dir) / (std::string(name) + ".csv");
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read " + path.string());
        std::string line;
        std::getline(in, line);
        if (line != "t,bus_id,p,q,label,attack_kind") throw std::runtime_error(path.string() + ": unexpected header");
        std::size_t lineno = 1;
        Eigen::Index row = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string f[6];
            for (auto& field : f) {
                if (!std::getline(ss, field, ',')) {
                    throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
                }
            }
            if (row == 0) {
                LabeledSample s;
                s.t = std::stoull(f[0]);
                s.split = tag;
                s.X.resize(n, 2);
                s.y = Eigen::VectorXd::Zero(n);
                if (f[5] != "clean") s.kind = attack_kind_from_string(f[5]);
                split->push_back(std::move(s));
            }
            auto& s = split->back();
            if (std::stoull(f[0]) != s.t || std::stoi(f[1]) != b.bus_ids[static_cast<std::size_t>(row)]) {
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": rows out of order");
            }
            s.X(row, 0) = std::strtod(f[2].c_str(), nullptr);
            s.X(row, 1) = std::strtod(f[3].c_str(), nullptr);
            s.y(row) = std::stoi(f[4]);
            row = (row + 1) % n;
        }
        if (row != 0) throw std::runtime_error(path.string() + ": truncated sample");
    }
    return b;
}

}  // namespace gridloc

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "gridloc/dataset.hpp"
#include "support.hpp"

using namespace gridloc;

namespace {

struct Fixture {
    PowerNetwork net{testsupport::case14()};
    GraphOperators ops = build_graph_operators(testsupport::case14());
};

const Fixture& fx() {
    static const Fixture f;
    return f;
}

DatasetConfig small_config(int horizon = 300) {
    DatasetConfig cfg;
    cfg.horizon = horizon;
    cfg.mix.steps = 10;
    return cfg;
}

const DatasetBundle& small_bundle() {
    static const DatasetBundle b = build_dataset(fx().net, fx().ops, small_config());
    return b;
}

// Pearson correlation between x[t] and x[t + lag].
double autocorrelation(const std::vector<double>& x, std::size_t lag) {
    const std::size_t m = x.size() - lag;
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        ma += x[i] / static_cast<double>(m);
        mb += x[i + lag] / static_cast<double>(m);
    }
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sab += (x[i] - ma) * (x[i + lag] - mb);
        saa += (x[i] - ma) * (x[i] - ma);
        sbb += (x[i + lag] - mb) * (x[i + lag] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

std::size_t positives(const LabeledSample& s) {
    return static_cast<std::size_t>(s.y.sum());
}

}  // namespace

TEST_CASE("profile multipliers stay inside the clamp") {
    LoadProfileConfig wild;
    wild.daily_amplitude = 0.6;
    wild.bus_jitter = 0.3;
    const auto p = synthesize_load_profiles(3000, 14, 1, wild);
    CHECK(p.multipliers.minCoeff() >= kMultiplierMin);
    CHECK(p.multipliers.maxCoeff() <= kMultiplierMax);
    CHECK(p.multipliers.minCoeff() == kMultiplierMin);
    CHECK(p.multipliers.maxCoeff() == kMultiplierMax);
    CHECK_THROWS(synthesize_load_profiles(0, 14, 1));
}

TEST_CASE("zero-jitter profile is the daily sinusoid") {
    LoadProfileConfig cfg;
    cfg.system_jitter = 0.0;
    cfg.bus_jitter = 0.0;
    cfg.weekly_amplitude = 0.0;
    const auto p = synthesize_load_profiles(2 * kMinutesPerDay, 3, 9, cfg);
    for (int t = 0; t < 2 * kMinutesPerDay; t += 37) {
        const double expect = 1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * t / kMinutesPerDay);
        CHECK(p.multipliers(t, 0) == doctest::Approx(expect).epsilon(1e-14));
        CHECK(p.multipliers(t, 2) == p.multipliers(t, 0));
        if (t + kMinutesPerDay < 2 * kMinutesPerDay) {
            CHECK(p.multipliers(t + kMinutesPerDay, 1) == doctest::Approx(p.multipliers(t, 1)).epsilon(1e-12));
        }
    }
}

TEST_CASE("profile repeats daily over a week") {
    const auto p = synthesize_load_profiles(7 * kMinutesPerDay, 14, 42);
    CHECK(autocorrelation(p.system, kMinutesPerDay) > 0.9);
    std::vector<double> bus(p.horizon());
    for (std::size_t t = 0; t < bus.size(); ++t) bus[t] = p.multipliers(static_cast<Eigen::Index>(t), 5);
    CHECK(autocorrelation(bus, kMinutesPerDay) > 0.9);
    // Half a day out of phase is strongly anti-correlated.
    CHECK(autocorrelation(p.system, kMinutesPerDay / 2) < 0.0);
}

TEST_CASE("profile is deterministic") {
    const auto a = synthesize_load_profiles(500, 14, 3);
    const auto b = synthesize_load_profiles(500, 14, 3);
    CHECK(a.multipliers == b.multipliers);
    CHECK(a.multipliers != synthesize_load_profiles(500, 14, 4).multipliers);
}

TEST_CASE("constant profile converges everywhere") {
    LoadProfile p;
    p.system.assign(50, 1.0);
    p.multipliers = Eigen::MatrixXd::Ones(50, 14);
    const auto clean = generate_clean_dataset(fx().net, p, 1.0, 5);
    CHECK(clean.skipped == 0);
    CHECK(clean.samples.size() == 50);
    // Noise differs per timestamp even though the state does not.
    CHECK(clean.samples[0].z.stacked() != clean.samples[1].z.stacked());
    const auto again = generate_clean_dataset(fx().net, p, 1.0, 5);
    CHECK(again.samples[7].z.stacked() == clean.samples[7].z.stacked());
}

TEST_CASE("infeasible profile aborts") {
    LoadProfile p;
    p.system.assign(10, 1.0);
    p.multipliers = Eigen::MatrixXd::Constant(10, 14, 100.0);
    CHECK_THROWS_AS(generate_clean_dataset(fx().net, p, 1.0, 5), std::runtime_error);
}

TEST_CASE("a full-length horizon yields one sample per minute") {
    const auto p = synthesize_load_profiles(34560, 14, 42);
    const auto clean = generate_clean_dataset(fx().net, p, 1.0, 42);
    CHECK(clean.samples.size() == 34560);
}

TEST_CASE("split sizes follow 4:1:1") {
    auto count = [](const std::vector<Split>& s, Split which) {
        return static_cast<std::size_t>(std::count(s.begin(), s.end(), which));
    };
    const auto big = assign_splits(34560, 1);
    CHECK(count(big, Split::Train) == 23040);
    CHECK(count(big, Split::Val) == 5760);
    CHECK(count(big, Split::Test) == 5760);
    const auto mid = assign_splits(8640, 1);
    CHECK(count(mid, Split::Train) == 5760);
    CHECK(count(mid, Split::Val) == 1440);
    CHECK(count(mid, Split::Test) == 1440);
    CHECK(assign_splits(8640, 1) == mid);
    CHECK(assign_splits(8640, 2) != mid);
}

TEST_CASE("attack protocol per split") {
    const auto& b = small_bundle();
    for (const auto* split : {&b.train, &b.val, &b.test}) {
        std::size_t attacked = 0;
        for (const auto& s : *split) {
            if (s.attacked()) {
                ++attacked;
                CHECK(positives(s) >= 2);
                CHECK(positives(s) <= 10);
            } else {
                CHECK(positives(s) == 0);
            }
            CHECK(s.y.size() == 14);
            CHECK(s.X.rows() == 14);
            CHECK(s.X.cols() == 2);
        }
        CHECK(attacked == split->size() / 2);
    }
    for (const auto* split : {&b.train, &b.val}) {
        for (const auto& s : *split) {
            if (s.kind) CHECK((*s.kind == AttackKind::Optimization || *s.kind == AttackKind::Distribution));
        }
    }
    std::set<AttackKind> test_kinds;
    for (const auto& s : b.test) {
        if (s.kind) test_kinds.insert(*s.kind);
    }
    CHECK(test_kinds.size() == 4);
}

TEST_CASE("splits are disjoint and complete") {
    const auto& b = small_bundle();
    std::set<std::size_t> seen;
    for (const auto* split : {&b.train, &b.val, &b.test}) {
        for (const auto& s : *split) CHECK(seen.insert(s.t).second);
    }
    CHECK(seen.size() == 300);
    CHECK(b.train.size() == 200);
    CHECK(b.val.size() == 50);
    CHECK(b.test.size() == 50);
    for (const auto& s : b.val) CHECK(s.split == Split::Val);
}

TEST_CASE("standardization uses train statistics only") {
    const auto profile = synthesize_load_profiles(120, 14, 7);
    const auto clean = generate_clean_dataset(fx().net, profile, 1.0, 7);
    const auto splits = assign_splits(clean.samples.size(), 7);
    AttackMix mix;
    mix.steps = 5;
    const auto raw = inject_attacks(fx().net, fx().ops, clean, splits, mix, 7);
    std::vector<LabeledSample> train_only;
    for (const auto& s : raw) {
        if (s.split == Split::Train) train_only.push_back(s);
    }
    const auto expect = Scaler::fit(train_only);
    const auto b = assemble_splits(raw, 7);
    CHECK((b.scaler.mean - expect.mean).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((b.scaler.std - expect.std).cwiseAbs().maxCoeff() <= 1e-15);

    // Scaled train features: zero mean, unit std wherever the feature varies.
    const auto n = b.train.size();
    for (Eigen::Index i = 0; i < 14; ++i) {
        for (Eigen::Index c = 0; c < 2; ++c) {
            double mean = 0.0, sq = 0.0;
            for (const auto& s : b.train) mean += s.X(i, c) / static_cast<double>(n);
            for (const auto& s : b.train) sq += std::pow(s.X(i, c) - mean, 2) / static_cast<double>(n);
            CHECK(std::abs(mean) <= 1e-9);
            if (b.scaler.std(i, c) != 1.0 || expect.std(i, c) >= kScalerFloor) {
                CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-9);
            }
        }
    }
    CHECK_THROWS(assemble_splits(std::vector<LabeledSample>(raw.begin(), raw.begin() + 5), 7));
}

TEST_CASE("label consistency against the injected region") {
    const auto& b = small_bundle();
    for (const auto& s : b.test) {
        for (Eigen::Index i = 0; i < s.y.size(); ++i) CHECK((s.y(i) == 0.0 || s.y(i) == 1.0));
    }
}

TEST_CASE("dataset build is deterministic") {
    const auto a = build_dataset(fx().net, fx().ops, small_config(60));
    const auto b = build_dataset(fx().net, fx().ops, small_config(60));
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].t == b.train[i].t);
        CHECK(a.train[i].X == b.train[i].X);
        CHECK(a.train[i].y == b.train[i].y);
    }
    CHECK(a.manifest == b.manifest);
    CHECK(a.manifest["load_profile"]["source"] == "synthetic");
}

TEST_CASE("dataset files round trip bit-exactly") {
    const auto& b = small_bundle();
    const auto dir = (std::filesystem::temp_directory_path() / "gridloc_test_dataset").string();
    std::filesystem::remove_all(dir);
    save_dataset(dir, b);
    const auto back = load_dataset(dir);
    CHECK(back.case_name == b.case_name);
    CHECK(back.bus_ids == b.bus_ids);
    CHECK(back.scaler.mean == b.scaler.mean);
    CHECK(back.scaler.std == b.scaler.std);
    const std::vector<const std::vector<LabeledSample>*> ours{&b.train, &b.val, &b.test};
    const std::vector<const std::vector<LabeledSample>*> theirs{&back.train, &back.val, &back.test};
    for (std::size_t k = 0; k < 3; ++k) {
        REQUIRE(ours[k]->size() == theirs[k]->size());
        for (std::size_t i = 0; i < ours[k]->size(); ++i) {
            const auto& x = (*ours[k])[i];
            const auto& y = (*theirs[k])[i];
            CHECK(x.t == y.t);
            CHECK(x.split == y.split);
            CHECK(x.X == y.X);
            CHECK(x.y == y.y);
            CHECK(x.kind == y.kind);
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("sample set layout") {
    const auto& b = small_bundle();
    const auto s = to_sample_set(b.val);
    CHECK(s.rows_per_sample == 14);
    CHECK(s.count() == b.val.size());
    CHECK(s.inputs.middleRows(14 * 3, 14) == b.val[3].X);
    CHECK(s.targets.middleRows(14 * 3, 14) == Eigen::MatrixXd(b.val[3].y));
}

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "gridloc/checkpoint.hpp"
#include "support.hpp"

using namespace gridloc;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("gridloc_test_" + name)).string();
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
    const auto ops = build_graph_operators(testsupport::case14());
    std::mt19937_64 rng(1);
    const auto X = testsupport::random_matrix(14, 2, rng);
    for (auto kind : {ModelKind::Iir, ModelKind::Fir, ModelKind::Fcn}) {
        ModelConfig cfg;
        cfg.kind = kind;
        cfg.channels = 5;
        cfg.fcn_hidden = 7;
        const auto m = Model::localizer(cfg, 14, 3);
        TrainHistory h;
        h.epochs = {{1, 0.7, 0.6}, {2, 0.5, 0.55}};
        h.best_epoch = 2;
        h.best_val_loss = 0.55;
        const auto path = temp_path(to_string(kind) + ".ckpt");
        save_checkpoint(path, m, {{"model", to_string(kind)}}, h);
        const auto back = load_checkpoint(path);
        CHECK(back.model.snapshot() == m.snapshot());
        CHECK(model_forward(back.model, ops, X) == model_forward(m, ops, X));
        CHECK(back.config["model"] == to_string(kind));
        CHECK(back.history.best_epoch == 2);
        REQUIRE(back.history.epochs.size() == 2);
        CHECK(back.history.epochs[1].val_loss == 0.55);
        std::filesystem::remove(path);
    }
}

TEST_CASE("checkpoint loader rejects foreign and truncated files") {
    const auto path = temp_path("bad.ckpt");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPT and some more bytes";
    }
    CHECK_THROWS(load_checkpoint(path));

    const auto m = Model::single_filter(ModelKind::Fir, 3, 1, 1);
    save_checkpoint(path, m, nlohmann::json::object(), TrainHistory{});
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 8);
    CHECK_THROWS(load_checkpoint(path));
    std::filesystem::remove(path);
    CHECK_THROWS(load_checkpoint(path));
}

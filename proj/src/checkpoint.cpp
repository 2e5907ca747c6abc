#include "gridloc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gridloc {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out.write(buf, 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

std::unique_ptr<Layer> make_layer(const std::string& kind, const std::vector<std::int64_t>& a) {
    auto need = [&](std::size_t n) {
        if (a.size() != n) throw std::runtime_error("checkpoint: bad shape args for layer " + kind);
    };
    if (kind == "arma") {
        need(4);
        return std::make_unique<ArmaLayer>(a[0], a[1], static_cast<int>(a[2]), static_cast<int>(a[3]));
    }
    if (kind == "fir") {
        need(3);
        return std::make_unique<FirLayer>(a[0], a[1], static_cast<int>(a[2]));
    }
    if (kind == "dense") {
        need(2);
        return std::make_unique<DenseLayer>(a[0], a[1]);
    }
    if (kind == "relu") {
        need(1);
        return std::make_unique<ReluLayer>(a[0]);
    }
    if (kind == "flatten") {
        need(2);
        return std::make_unique<FlattenLayer>(a[0], a[1]);
    }
    if (kind == "unflatten") {
        need(1);
        return std::make_unique<UnflattenLayer>(a[0]);
    }
    throw std::runtime_error("checkpoint: unknown layer kind " + kind);
}

}  // namespace

nlohmann::json history_to_json(const TrainHistory& history) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : history.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    }
    return {{"epochs", epochs},
            {"best_epoch", history.best_epoch},
            {"best_val_loss", history.best_val_loss},
            {"early_stopped", history.early_stopped}};
}

TrainHistory history_from_json(const nlohmann::json& j) {
    TrainHistory h;
    for (const auto& e : j.at("epochs")) {
        h.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>()});
    }
    h.best_epoch = j.at("best_epoch").get<int>();
    h.best_val_loss = j.at("best_val_loss").get<double>();
    h.early_stopped = j.at("early_stopped").get<bool>();
    return h;
}

void save_checkpoint(const std::string& path, const Model& model, const nlohmann::json& config,
                     const TrainHistory& history) {
    nlohmann::json layers = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& layer : model.layers()) {
        nlohmann::json params = nlohmann::json::array();
        for (const auto* p : layer->params()) {
            params.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}, {"offset", offset}});
            offset += static_cast<std::uint64_t>(p->value.size());
        }
        layers.push_back({{"kind", layer->kind()}, {"shape", layer->shape_args()}, {"params", params}});
    }
    const nlohmann::json header = {{"format", "gridloc-checkpoint"},
                                   {"version", 1},
                                   {"sigmoid_output", model.sigmoid_output()},
                                   {"layers", layers},
                                   {"value_count", offset},
                                   {"config", config},
                                   {"history", history_to_json(history)}};
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write(kMagic, 8);
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* p : model.params()) {
        for (Eigen::Index i = 0; i < p->value.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(p->value(i)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("not a gridloc checkpoint: " + path);
    const auto len = get_u64(in);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("checkpoint: truncated header");
    const auto header = nlohmann::json::parse(text);

    std::vector<std::unique_ptr<Layer>> layers;
    for (const auto& l : header.at("layers")) {
        layers.push_back(make_layer(l.at("kind").get<std::string>(), l.at("shape").get<std::vector<std::int64_t>>()));
    }
    Checkpoint ck{Model(std::move(layers), header.at("sigmoid_output").get<bool>()), header.at("config"),
                  history_from_json(header.at("history"))};
    auto params = ck.model.params();
    std::size_t index = 0;
    for (const auto& l : header.at("layers")) {
        for (const auto& p : l.at("params")) {
            if (index >= params.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
            auto* dst = params[index++];
            if (dst->value.rows() != p.at("rows").get<Eigen::Index>() ||
                dst->value.cols() != p.at("cols").get<Eigen::Index>()) {
                throw std::runtime_error("checkpoint: shape mismatch for " + dst->name);
            }
        }
    }
    if (index != params.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
    for (auto* p : params) {
        for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value(i) = std::bit_cast<double>(get_u64(in));
    }
    return ck;
}

}  // namespace gridloc

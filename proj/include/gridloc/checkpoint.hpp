#pragma once

#include <string>

#include <json.hpp>

#include "gridloc/model.hpp"
#include "gridloc/train.hpp"

namespace gridloc {

/// Model checkpoint container (layout in docs/checkpoint.md):
///   8 bytes   magic "GLCKPT01"
///   8 bytes   header length H, unsigned little-endian
///   H bytes   UTF-8 JSON header (layers, parameter shapes/offsets, config echo, history)
///   rest      parameter values, float64 little-endian, column-major per parameter
struct Checkpoint {
    Model model;
    nlohmann::json config;   // free-form echo of the run configuration
    TrainHistory history;
};

void save_checkpoint(const std::string& path, const Model& model, const nlohmann::json& config,
                     const TrainHistory& history);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json history_to_json(const TrainHistory& history);
TrainHistory history_from_json(const nlohmann::json& j);

}  // namespace gridloc

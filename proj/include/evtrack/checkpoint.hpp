#pragma once

#include <filesystem>

#include <json.hpp>

#include "evtrack/afnet.hpp"
#include "evtrack/params.hpp"

namespace evtrack {

/// A checkpoint directory holds checkpoint.json (the caller's metadata plus
/// a "tensors" list of names and shapes) and params.bin, the tensors in
/// that order as little-endian float64.
void write_checkpoint(const std::filesystem::path& dir, nlohmann::json meta, const ParamStore& tensors);
ParamStore read_checkpoint(const std::filesystem::path& dir, nlohmann::json& meta);

namespace afnet {

nlohmann::json config_to_json(const AFNetConfig& config);
AFNetConfig config_from_json(const nlohmann::json& j);

/// Appends the model's parameters and running statistics to `out`.
void export_model(const AFNetModel& model, ParamStore& out);
/// Rebuilds a model from tensors written by export_model; shapes must match
/// the configuration.
AFNetModel import_model(const AFNetConfig& config, const ParamStore& tensors);

}  // namespace afnet

}  // namespace evtrack

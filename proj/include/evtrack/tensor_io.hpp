#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evtrack/tensor.hpp"

namespace evtrack {

/// Little-endian float64 encoding of the tensor data, no header.
std::string encode_tensor_blob(const std::vector<const Tensor*>& tensors);
/// Decodes `bytes` into tensors of the given shapes; the byte count must
/// match exactly.
std::vector<Tensor> decode_tensor_blob(std::string_view bytes, const std::vector<std::vector<int>>& shapes);

/// save_tensor writes `<path>` (raw float64) and `<path>.json` ({"shape": [...]}).
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace evtrack

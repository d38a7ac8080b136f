#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

namespace gansfer {

/// Binary checkpoint container.
///
/// Layout (all integers little-endian):
///   bytes 0..7   magic "GNSFCKP1"
///   bytes 8..15  uint64 header length H
///   next H bytes UTF-8 JSON: {"meta": {...}, "tensors": [{"name", "dtype",
///                "shape", "offset", "nbytes"}, ...]}
///   remainder    raw contiguous tensor data; offsets are relative to the
///                start of this region
///
/// Supported dtypes: "f32", "f64", "i64".
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  void add(const std::string& name, const torch::Tensor& t) { tensors.emplace_back(name, t); }
  const torch::Tensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace gansfer

#pragma once

#include <map>
#include <string>

#include "osmid/core/tensor.hpp"

namespace osmid {

// Versioned binary container of named double tensors. Used for
// checkpoints and the optical feature cache.
struct TensorFile {
  static constexpr uint32_t kVersion = 1;

  std::map<std::string, Tensor> entries;

  void save(const std::string& path) const;
  static TensorFile load(const std::string& path);

  bool has(const std::string& k) const { return entries.count(k) > 0; }
  const Tensor& at(const std::string& k) const;
  void put(const std::string& k, Tensor t) { entries[k] = std::move(t); }
};

}  // namespace osmid

#pragma once

#include <string>

#include "osmid/descriptor/stage2.hpp"
#include "osmid/diffusion/stage1.hpp"
#include "osmid/matching/matching.hpp"

namespace osmid::config {

struct EvalConfig {
  double eps_px = 3.0;
  matching::RansacConfig ransac;
};

// Everything a run needs, serializable so any output can be reproduced
// from the stored file plus seeds.
struct RunConfig {
  uint64_t seed = 0;
  std::string out_dir = ".";
  int workers = 2;

  int dataset_size = 128;
  int dataset_count = 200;

  diffusion::Stage1Config stage1;
  descriptor::Stage2Config stage2;
  EvalConfig eval;

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);

  // file -> overrides on top of defaults
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  std::string digest() const;
};

}  // namespace osmid::config

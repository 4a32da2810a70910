#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "osmid/data/tile.hpp"

namespace osmid::data {

// On-disk dataset layout:
//   root/dataset.json              count, seed, size, digest
//   root/pairs/NNNNNN/optical.png  16-bit RGB
//   root/pairs/NNNNNN/sar.png      16-bit gray
//   root/pairs/NNNNNN/manifest.json
void write_pair(const std::string& pair_dir, const PairSample& pair);
PairSample read_pair(const std::string& pair_dir);

struct DatasetInfo {
  int count = 0;
  uint64_t seed = 0;
  int size = 0;
  std::string digest;
};

std::string pair_dir(const std::string& root, int index);
void write_dataset_info(const std::string& root, const DatasetInfo& info);
DatasetInfo read_dataset_info(const std::string& root);
std::vector<std::string> list_pair_dirs(const std::string& root);

// FNV digest over manifests and tile bytes, independent of directory
// iteration order.
std::string dataset_digest(const std::string& root);

}  // namespace osmid::data

#include "osmid/data/manifest.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "osmid/core/digest.hpp"
#include "osmid/data/raster_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace osmid::data {

namespace {
std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}
}  // namespace

std::string pair_dir(const std::string& root, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return root + "/pairs/" + buf;
}

void write_pair(const std::string& dir, const PairSample& pair) {
  fs::create_directories(dir);
  save_tile(pair.optical, dir + "/optical.png");
  save_tile(pair.sar, dir + "/sar.png");

  json j;
  j["tile_id_optical"] = pair.optical.tile_id;
  j["tile_id_sar"] = pair.sar.tile_id;
  j["optical_path"] = "optical.png";
  j["sar_path"] = "sar.png";
  j["h_gt"] = pair.h_gt.m;  // row-major 3x3
  j["land_use"] = pair.land_use;
  j["prompt_text"] = pair.prompt.text;
  std::ofstream os(dir + "/manifest.json");
  os << j.dump(2) << "\n";
  if (!os) throw std::runtime_error("cannot write manifest in " + dir);
}

PairSample read_pair(const std::string& dir) {
  json j = json::parse(slurp(dir + "/manifest.json"));
  PairSample pair;
  pair.optical = load_tile(dir + "/" + j.at("optical_path").get<std::string>(),
                           Modality::optical);
  pair.sar = load_tile(dir + "/" + j.at("sar_path").get<std::string>(), Modality::sar);
  pair.optical.tile_id = j.at("tile_id_optical").get<std::string>();
  pair.sar.tile_id = j.at("tile_id_sar").get<std::string>();
  std::array<double, 9> hm{};
  auto ha = j.at("h_gt");
  for (int i = 0; i < 9; ++i) hm[static_cast<size_t>(i)] = ha.at(i).get<double>();
  pair.h_gt = Homography::from_array(hm);
  auto lu = j.at("land_use");
  for (int i = 0; i < prompt::kNumClasses; ++i)
    pair.land_use[static_cast<size_t>(i)] = lu.at(i).get<double>();
  pair.prompt = prompt::build_prompt(
      pair.land_use, prompt::init_prompt_table(prompt::kDefaultEmbedDim, 0));
  return pair;
}

void write_dataset_info(const std::string& root, const DatasetInfo& info) {
  json j;
  j["count"] = info.count;
  j["seed"] = info.seed;
  j["size"] = info.size;
  j["digest"] = info.digest;
  std::ofstream os(root + "/dataset.json");
  os << j.dump(2) << "\n";
}

DatasetInfo read_dataset_info(const std::string& root) {
  json j = json::parse(slurp(root + "/dataset.json"));
  DatasetInfo info;
  info.count = j.at("count").get<int>();
  info.seed = j.at("seed").get<uint64_t>();
  info.size = j.at("size").get<int>();
  info.digest = j.value("digest", "");
  return info;
}

std::vector<std::string> list_pair_dirs(const std::string& root) {
  std::vector<std::string> dirs;
  const fs::path pairs = fs::path(root) / "pairs";
  if (!fs::exists(pairs)) return dirs;
  for (const auto& e : fs::directory_iterator(pairs))
    if (e.is_directory()) dirs.push_back(e.path().string());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::string dataset_digest(const std::string& root) {
  Digest d;
  for (const auto& dir : list_pair_dirs(root)) {
    d.update(fs::path(dir).filename().string());
    for (const char* f : {"manifest.json", "optical.png", "sar.png"}) {
      const std::string path = dir + "/" + f;
      if (fs::exists(path)) d.update(slurp(path));
    }
  }
  return d.hex();
}

}  // namespace osmid::data

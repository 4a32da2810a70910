#include "osmid/config/run_config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "osmid/core/digest.hpp"

using nlohmann::json;

namespace osmid::config {

namespace {

// merge-with-defaults helpers: every field is optional in the file
template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json section(const json& j, const char* key) {
  return j.contains(key) ? j.at(key) : json::object();
}

}  // namespace

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["workers"] = workers;
  j["dataset"] = {{"size", dataset_size}, {"count", dataset_count}};
  j["schedule"] = {{"T", stage1.T},
                   {"beta_start", stage1.beta_start},
                   {"beta_end", stage1.beta_end}};
  j["diffusion"] = {{"base_channels", stage1.net.base_channels},
                    {"time_dim", stage1.net.time_dim},
                    {"prompt_dim", stage1.net.prompt_dim},
                    {"groups", stage1.net.groups},
                    {"init_seed", stage1.net.init_seed},
                    {"train_base", stage1.net.train_base}};
  j["stage1"] = {{"epochs", stage1.epochs},
                 {"lr", stage1.lr},
                 {"weight_decay", stage1.weight_decay},
                 {"batch_size", stage1.batch_size},
                 {"divergence_factor", stage1.divergence_factor},
                 {"divergence_patience", stage1.divergence_patience}};
  j["optical"] = {{"common_channels", stage2.optical.common_channels},
                  {"fine_c1", stage2.optical.fine_c1},
                  {"fine_c2", stage2.optical.fine_c2},
                  {"fine_c3", stage2.optical.fine_c3},
                  {"coarse_seed", stage2.optical.coarse_seed},
                  {"fine_seed", stage2.optical.fine_seed},
                  {"feature_cache_dir", stage2.optical.feature_cache_dir}};
  j["stage2"] = {{"epochs", stage2.epochs},
                 {"lr", stage2.lr},
                 {"lr_final_factor", stage2.lr_final_factor},
                 {"weight_decay", stage2.weight_decay},
                 {"descriptor_dim", stage2.descriptor_dim},
                 {"tau", stage2.tau},
                 {"symmetrize", stage2.symmetrize},
                 {"unified_divisor", stage2.unified_divisor},
                 {"cbam_reduction", stage2.cbam_reduction},
                 {"n_max", stage2.n_max_correspondences},
                 {"t_star", stage2.t_star},
                 {"feature_noise_seed", stage2.feature_noise_seed},
                 {"init_seed", stage2.init_seed}};
  j["pc"] = {{"n_scales", stage2.pc.n_scales},
             {"n_orientations", stage2.pc.n_orientations},
             {"min_wavelength", stage2.pc.min_wavelength},
             {"scale_multiplier", stage2.pc.scale_multiplier},
             {"sigma_onf", stage2.pc.sigma_onf},
             {"noise_k", stage2.pc.noise_k}};
  j["fast"] = {{"threshold", stage2.fast.threshold},
               {"nms_radius", stage2.fast.nms_radius},
               {"max_keypoints", stage2.fast.max_keypoints}};
  j["eval"] = {{"eps_px", eval.eps_px},
               {"ransac_threshold_px", eval.ransac.threshold_px},
               {"ransac_iters", eval.ransac.max_iters},
               {"ransac_seed", eval.ransac.seed}};
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  RunConfig c;
  get_if(j, "seed", c.seed);
  get_if(j, "out_dir", c.out_dir);
  get_if(j, "workers", c.workers);
  json d = section(j, "dataset");
  get_if(d, "size", c.dataset_size);
  get_if(d, "count", c.dataset_count);
  json s = section(j, "schedule");
  get_if(s, "T", c.stage1.T);
  get_if(s, "beta_start", c.stage1.beta_start);
  get_if(s, "beta_end", c.stage1.beta_end);
  json df = section(j, "diffusion");
  get_if(df, "base_channels", c.stage1.net.base_channels);
  get_if(df, "time_dim", c.stage1.net.time_dim);
  get_if(df, "prompt_dim", c.stage1.net.prompt_dim);
  get_if(df, "groups", c.stage1.net.groups);
  get_if(df, "init_seed", c.stage1.net.init_seed);
  get_if(df, "train_base", c.stage1.net.train_base);
  json s1 = section(j, "stage1");
  get_if(s1, "epochs", c.stage1.epochs);
  get_if(s1, "lr", c.stage1.lr);
  get_if(s1, "weight_decay", c.stage1.weight_decay);
  get_if(s1, "batch_size", c.stage1.batch_size);
  get_if(s1, "divergence_factor", c.stage1.divergence_factor);
  get_if(s1, "divergence_patience", c.stage1.divergence_patience);
  json op = section(j, "optical");
  get_if(op, "common_channels", c.stage2.optical.common_channels);
  get_if(op, "fine_c1", c.stage2.optical.fine_c1);
  get_if(op, "fine_c2", c.stage2.optical.fine_c2);
  get_if(op, "fine_c3", c.stage2.optical.fine_c3);
  get_if(op, "coarse_seed", c.stage2.optical.coarse_seed);
  get_if(op, "fine_seed", c.stage2.optical.fine_seed);
  get_if(op, "feature_cache_dir", c.stage2.optical.feature_cache_dir);
  json s2 = section(j, "stage2");
  get_if(s2, "epochs", c.stage2.epochs);
  get_if(s2, "lr", c.stage2.lr);
  get_if(s2, "lr_final_factor", c.stage2.lr_final_factor);
  get_if(s2, "weight_decay", c.stage2.weight_decay);
  get_if(s2, "descriptor_dim", c.stage2.descriptor_dim);
  get_if(s2, "tau", c.stage2.tau);
  get_if(s2, "symmetrize", c.stage2.symmetrize);
  get_if(s2, "unified_divisor", c.stage2.unified_divisor);
  get_if(s2, "cbam_reduction", c.stage2.cbam_reduction);
  get_if(s2, "n_max", c.stage2.n_max_correspondences);
  get_if(s2, "t_star", c.stage2.t_star);
  get_if(s2, "feature_noise_seed", c.stage2.feature_noise_seed);
  get_if(s2, "init_seed", c.stage2.init_seed);
  json pc = section(j, "pc");
  get_if(pc, "n_scales", c.stage2.pc.n_scales);
  get_if(pc, "n_orientations", c.stage2.pc.n_orientations);
  get_if(pc, "min_wavelength", c.stage2.pc.min_wavelength);
  get_if(pc, "scale_multiplier", c.stage2.pc.scale_multiplier);
  get_if(pc, "sigma_onf", c.stage2.pc.sigma_onf);
  get_if(pc, "noise_k", c.stage2.pc.noise_k);
  json fc = section(j, "fast");
  get_if(fc, "threshold", c.stage2.fast.threshold);
  get_if(fc, "nms_radius", c.stage2.fast.nms_radius);
  get_if(fc, "max_keypoints", c.stage2.fast.max_keypoints);
  json ev = section(j, "eval");
  get_if(ev, "eps_px", c.eval.eps_px);
  get_if(ev, "ransac_threshold_px", c.eval.ransac.threshold_px);
  get_if(ev, "ransac_iters", c.eval.ransac.max_iters);
  get_if(ev, "ransac_seed", c.eval.ransac.seed);
  // stage-1/2 seeds follow the master seed
  c.stage1.seed = c.seed;
  c.stage2.seed = c.seed;
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return from_json(os.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream os(path);
  os << to_json() << "\n";
  if (!os) throw std::runtime_error("cannot write config: " + path);
}

std::string RunConfig::digest() const {
  Digest d;
  d.update(to_json());
  return d.hex();
}

}  // namespace osmid::config

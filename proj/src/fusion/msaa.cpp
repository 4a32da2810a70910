#include "osmid/fusion/msaa.hpp"

#include <stdexcept>

namespace osmid::fusion {

using ad::Var;

MsaaFusion MsaaFusion::make(nn::ParamStore& ps, const std::string& prefix,
                            int n_levels, int channels, int unified_divisor,
                            uint64_t seed) {
  MsaaFusion m;
  m.n_levels_ = n_levels;
  m.unified_divisor_ = unified_divisor;
  for (int i = 0; i < n_levels; ++i) {
    m.heads_.push_back(nn::Conv2d::make(ps, prefix + ".head" + std::to_string(i),
                                        3, 3, channels, channels, 1, 1,
                                        seed_mix({seed, static_cast<uint64_t>(i)})));
  }
  m.w_ = &ps.create(prefix + ".w", Tensor::zeros({n_levels}), true);
  return m;
}

std::vector<Var> MsaaFusion::project_and_align(ad::Tape& tape,
                                               const std::vector<Var>& levels,
                                               const std::vector<int>& divisors,
                                               int input_h, int input_w) const {
  if (static_cast<int>(levels.size()) != n_levels_ ||
      static_cast<int>(divisors.size()) != n_levels_)
    throw std::invalid_argument("project_and_align: level count mismatch");
  const int c = levels[0].dim(2);
  for (const Var& l : levels)
    if (l.dim(2) != c)
      throw std::invalid_argument("project_and_align: channel width mismatch across levels");
  const int th = input_h / unified_divisor_, tw = input_w / unified_divisor_;
  std::vector<Var> out;
  out.reserve(levels.size());
  for (int i = 0; i < n_levels_; ++i) {
    Var head = heads_[static_cast<size_t>(i)](tape, levels[static_cast<size_t>(i)]);
    out.push_back(ad::resize_bilinear(head, th, tw));
  }
  return out;
}

std::pair<Var, Var> MsaaFusion::aggregate(ad::Tape& tape,
                                          const std::vector<Var>& aligned) const {
  if (aligned.empty()) throw std::invalid_argument("aggregate: empty level list");
  for (size_t i = 1; i < aligned.size(); ++i)
    if (aligned[i].shape() != aligned[0].shape())
      throw std::invalid_argument("aggregate: aligned maps must share one shape");
  Var beta = ad::softmax_vec(nn::use(tape, *w_));
  Var fused = ad::scale_by_vec_elem(aligned[0], beta, 0);
  for (size_t i = 1; i < aligned.size(); ++i)
    fused = ad::add(fused, ad::scale_by_vec_elem(aligned[i], beta, static_cast<int>(i)));
  return {fused, beta};
}

FusedMap MsaaFusion::fuse_values(const features::FeaturePyramid& pyr) const {
  ad::Tape tape;
  std::vector<Var> levels;
  std::vector<int> divisors;
  for (const auto& l : pyr.levels) {
    levels.push_back(ad::constant(tape, l.fmap));
    divisors.push_back(l.scale_divisor);
  }
  const int input_h = pyr.levels.back().fmap.dim(0) * pyr.levels.back().scale_divisor;
  const int input_w = pyr.levels.back().fmap.dim(1) * pyr.levels.back().scale_divisor;
  auto aligned = project_and_align(tape, levels, divisors, input_h, input_w);
  auto [fused, beta] = aggregate(tape, aligned);
  FusedMap out;
  out.fmap = fused.value();
  out.beta = beta.value().data;
  out.unified_divisor = unified_divisor_;
  return out;
}

CbamRefine CbamRefine::make(nn::ParamStore& ps, const std::string& prefix,
                            int channels, int reduction, uint64_t seed) {
  CbamRefine c;
  const int hidden = std::max(1, channels / reduction);
  c.fc1_ = nn::Linear::make(ps, prefix + ".fc1", channels, hidden, seed_mix({seed, 1}));
  c.fc2_ = nn::Linear::make(ps, prefix + ".fc2", hidden, channels, seed_mix({seed, 2}));
  c.spatial_ = nn::Conv2d::make(ps, prefix + ".spatial", 7, 7, 2, 1, 1, 0,
                                seed_mix({seed, 3}));
  return c;
}

CbamRefine::Gates CbamRefine::refine(ad::Tape& tape, Var x) const {
  const int c = x.dim(2);
  auto mlp = [&](Var v) { return fc2_(tape, ad::relu(fc1_(tape, v))); };
  Var avg = ad::reshape(ad::spatial_mean(x), {1, c});
  Var mx = ad::reshape(ad::spatial_max(x), {1, c});
  Var gate_c = ad::sigmoid(ad::reshape(ad::add(mlp(avg), mlp(mx)), {c}));
  Var x1 = ad::mul_bcast_c(x, gate_c);

  // edge-replicate padding keeps the gate free of border artifacts and
  // preserves spatially constant inputs exactly
  Var sp_in = ad::pad_edge(ad::concat_c(ad::channel_mean(x1), ad::channel_max(x1)), 3);
  Var gate_s = ad::sigmoid(spatial_(tape, sp_in));
  Gates g;
  g.out = ad::mul_bcast_hw(x1, gate_s);
  g.channel_gate = gate_c;
  g.spatial_gate = gate_s;
  return g;
}

FusedMap CbamRefine::refine_values(const FusedMap& fused) const {
  ad::Tape tape;
  Gates g = refine(tape, ad::constant(tape, fused.fmap));
  FusedMap out = fused;
  out.fmap = g.out.value();
  return out;
}

}  // namespace osmid::fusion

#include "osmid/prompt/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "osmid/core/rng.hpp"

namespace osmid::prompt {

Tensor init_prompt_table(int embed_dim, uint64_t seed) {
  Tensor t({kNumClasses, embed_dim});
  auto rng = make_rng({seed, 0x70726f6d7074ull});
  fill_normal(t, rng, 0.0, 1.0 / std::sqrt(static_cast<double>(embed_dim)));
  return t;
}

Tensor embed_prompt(const std::array<double, kNumClasses>& class_vector,
                    const Tensor& table) {
  if (table.ndim() != 2 || table.dim(0) != kNumClasses)
    throw std::invalid_argument("embed_prompt: table must be [7,E]");
  if (!table.all_finite())
    throw std::invalid_argument("embed_prompt: table must be finite");
  const int e = table.dim(1);
  Tensor out({e});
  for (int k = 0; k < kNumClasses; ++k)
    for (int j = 0; j < e; ++j)
      out[j] += class_vector[static_cast<size_t>(k)] * table.at2(k, j);
  return out;
}

PromptSpec build_prompt(const std::array<double, kNumClasses>& land_use,
                        const Tensor& table) {
  PromptSpec spec;
  double sum = 0.0;
  for (double v : land_use) {
    if (v < 0.0 || !std::isfinite(v))
      throw std::invalid_argument("build_prompt: histogram entries must be >= 0 and finite");
    sum += v;
  }
  if (sum < 1e-12) {
    spec.class_vector.fill(0.0);
    spec.class_vector[6] = 1.0;  // "others"
    spec.fallback_applied = true;
  } else {
    if (std::fabs(sum - 1.0) > 1e-3)
      throw std::invalid_argument("build_prompt: histogram must sum to 1 within 1e-3");
    for (int k = 0; k < kNumClasses; ++k)
      spec.class_vector[static_cast<size_t>(k)] = land_use[static_cast<size_t>(k)] / sum;
  }

  // classes above threshold, descending by area; ties keep class order
  std::array<int, kNumClasses> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return spec.class_vector[static_cast<size_t>(a)] > spec.class_vector[static_cast<size_t>(b)];
  });
  std::string classes;
  for (int k : order) {
    if (spec.class_vector[static_cast<size_t>(k)] < kPromptInclusionThreshold) continue;
    if (!classes.empty()) classes += ", ";
    classes += kClassNames[k];
  }
  spec.text = "A SAR image of a region containing " + classes;
  spec.embedding = embed_prompt(spec.class_vector, table);
  return spec;
}

}  // namespace osmid::prompt

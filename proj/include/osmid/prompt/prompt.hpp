#pragma once

#include <array>
#include <string>

#include "osmid/core/tensor.hpp"

namespace osmid::prompt {

// Land-use classes, fixed order used by every histogram in the project.
inline constexpr int kNumClasses = 7;
inline constexpr const char* kClassNames[kNumClasses] = {
    "farmland", "city", "village", "water", "forest", "road", "others"};
inline constexpr int kDefaultEmbedDim = 64;
inline constexpr uint64_t kDefaultTableSeed = 0;

// Fraction below which a class is left out of the prompt sentence.
inline constexpr double kPromptInclusionThreshold = 0.05;

struct PromptSpec {
  std::string text;
  std::array<double, kNumClasses> class_vector{};
  Tensor embedding;  // [E]
  bool fallback_applied = false;
};

// Class-embedding table standing in for a text encoder: prompts here are
// class-composition sentences, so the histogram carries all the content.
Tensor init_prompt_table(int embed_dim, uint64_t seed);

// Normalizes the histogram, renders the sentence, and embeds through the
// given table. An all-zero histogram falls back to one-hot "others".
PromptSpec build_prompt(const std::array<double, kNumClasses>& land_use,
                        const Tensor& table);

// embedding = class_vector^T * table; exactly linear in the histogram.
Tensor embed_prompt(const std::array<double, kNumClasses>& class_vector,
                    const Tensor& table);

}  // namespace osmid::prompt

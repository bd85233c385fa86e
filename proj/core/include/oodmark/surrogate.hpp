#pragma once

#include <cstdint>
#include <vector>

#include "oodmark/dataset.hpp"
#include "oodmark/image.hpp"

namespace oodmark {

class Classifier;

// Deterministic per-index patchification: patch i depends only on
// (source, cfg, i), so generation can be sharded freely.
Image generate_patch(const SourceImage& source, const AugmentConfig& cfg, uint64_t index);

SurrogateDataset generate_patches(const SourceImage& source, int64_t count,
                                  const AugmentConfig& cfg);

// Assign teacher supervision: soft_label = softmax(teacher logits),
// hard_label = argmax with lowest-index tie-break.
void label_with_teacher(SurrogateDataset& ds, Classifier& teacher);

// |poison| = round(ratio * N), chosen by a seeded shuffle.
void split_clean_poison(SurrogateDataset& ds, double poison_ratio, uint64_t seed);

// Training-time augmentation: horizontal flip + zero-pad-and-crop shift.
// Identity when flip_prob == 0 and runtime_pad == 0.
LabeledSample runtime_augment(const LabeledSample& sample, uint64_t step_seed,
                              const AugmentConfig& cfg);

// Shift by (dx, dy) with zero fill, optionally mirror horizontally.
Image shift_and_flip(const Image& img, int dx, int dy, bool flip);

SurrogateDataset merge_datasets(const SurrogateDataset& a, const SurrogateDataset& b);

}  // namespace oodmark

#pragma once

#include <cstdint>
#include <vector>

#include "oodmark/dataset.hpp"
#include "oodmark/image.hpp"

namespace oodmark {

// Deterministic multi-octave noise texture standing in for an arbitrary
// out-of-distribution photograph; large enough to patchify.
SourceImage make_texture_source(uint64_t seed, int side = 320);

// Procedural 10-class shape dataset standing in for a small public
// image-classification split. Each class pairs a fixed glyph with a hue
// family; per-sample geometry, colors and noise are seeded.
std::vector<LabeledSample> make_id_dataset(uint64_t seed, size_t count, int num_classes = 10,
                                           int size = 32);

}  // namespace oodmark

#pragma once

// Programmatic evaluation images with exact ground truth and auto-generated
// scribbles: flat, gradient and textured regions over varied layouts.

#include "gdc/image.hpp"
#include "gdc/label_mask.hpp"
#include "gdc/scribble.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gdc {

struct SyntheticCase {
  std::string name;
  RgbImage image;
  LabelMask gt;
  ScribbleSet scribbles;
};

/// Two flat-coloured halves split vertically, one vertical stroke per half.
SyntheticCase two_region_fixture(Index size = 64);

/// `count` images of size x size; deterministic in `seed`.
std::vector<SyntheticCase> synthetic_suite(int count = 20, std::uint64_t seed = 7, Index size = 64);

/// One stroke per category through the deepest interior point of its largest
/// region, along whichever axis stays inside longer (capped at 2 * max_half_length).
ScribbleSet skeleton_scribbles(const LabelMask& gt, int radius = 2, Index max_half_length = 12);

/// Writes image.png, scribbles.json and gt.png into dir/<case name>/.
void write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticCase>& cases);

}  // namespace gdc

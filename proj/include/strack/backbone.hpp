#ifndef STRACK_BACKBONE_HPP_
#define STRACK_BACKBONE_HPP_

#include <array>
#include <cstdint>
#include <vector>

#include "strack/grid.hpp"
#include "strack/tensor_ops.hpp"

namespace strack {

enum class BackboneMode { spatial, temporal };

struct BackboneStage {
  ConvKernel conv;
  bool relu = true;

  bool operator==(const BackboneStage&) const = default;
};

// Frozen toy feature extractor. Stage 0 keeps resolution; every later stage
// halves it, so the tap after stage log2(d) has downsampling factor d. In
// temporal mode the first log2(clip_len) stages also halve the frame axis with
// a 2-tap stride-2 temporal kernel, so both taps leave with temporal extent 1.
struct BackboneParams {
  BackboneMode mode = BackboneMode::spatial;
  std::vector<BackboneStage> stages;
  std::array<Index, 2> tap_points{};          // stage indices (shallow, deep)
  std::array<Index, 2> downsample_factors{};  // (d_shallow, d_deep)
  Index channels = 0;
  Index patch_extent = 0;
  Index clip_len = 1;  // frames consumed; 1 in spatial mode

  bool operator==(const BackboneParams&) const = default;
};

struct BackboneTaps {
  Grid shallow;  // c' × E/d_shallow × E/d_shallow
  Grid deep;     // c' × E/d_deep × E/d_deep
};

// Throws ShapeError for factors that are not increasing powers of two dividing
// the patch extent, or a clip length that is not a power of two short enough
// to collapse before the shallow tap.
BackboneParams make_toy_backbone(std::uint64_t seed, BackboneMode mode, Index channels,
                                 std::array<Index, 2> downsample_factors, Index patch_extent,
                                 Index clip_len = 4);

// patch: 3 × E × E with values in [0, 1].
BackboneTaps extract_spatial(const Grid& patch, const BackboneParams& params);

// clip: 3 × f × E × E, f == params.clip_len, key frame last.
BackboneTaps extract_temporal(const Grid& clip, const BackboneParams& params);

Index tap_extent(const BackboneParams& params, int tap);

}  // namespace strack

#endif  // STRACK_BACKBONE_HPP_

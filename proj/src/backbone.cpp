#include "strack/backbone.hpp"

#include <bit>
#include <string>

#include "strack/rng.hpp"

namespace strack {

namespace {

bool is_pow2(Index v) { return v > 0 && std::has_single_bit(static_cast<std::uint64_t>(v)); }

Index log2_of(Index v) { return static_cast<Index>(std::bit_width(static_cast<std::uint64_t>(v))) - 1; }

BackboneTaps run_stages(Grid x, const BackboneParams& params) {
  BackboneTaps taps;
  for (std::size_t i = 0; i < params.stages.size(); ++i) {
    const auto& stage = params.stages[i];
    x = params.mode == BackboneMode::spatial ? conv2d(x, stage.conv) : conv3d(x, stage.conv);
    if (stage.relu) x = relu(x);
    const auto idx = static_cast<Index>(i);
    if (idx != params.tap_points[0] && idx != params.tap_points[1]) continue;
    Grid tap = x;
    if (params.mode == BackboneMode::temporal) {
      // Singleton frame axis is squeezed away.
      tap = x.reshaped({x.dim(0), x.dim(2), x.dim(3)});
    }
    (idx == params.tap_points[0] ? taps.shallow : taps.deep) = std::move(tap);
  }
  return taps;
}

}  // namespace

BackboneParams make_toy_backbone(std::uint64_t seed, BackboneMode mode, Index channels,
                                 std::array<Index, 2> downsample_factors, Index patch_extent,
                                 Index clip_len) {
  const auto [ds, dd] = downsample_factors;
  if (!is_pow2(ds) || !is_pow2(dd) || ds >= dd) {
    throw ShapeError("downsample factors must be increasing powers of two, got (" +
                     std::to_string(ds) + ", " + std::to_string(dd) + ")");
  }
  if (patch_extent <= 0 || patch_extent % dd != 0) {
    throw ShapeError("patch extent " + std::to_string(patch_extent) +
                     " is not divisible by downsample factor " + std::to_string(dd));
  }
  if (channels <= 0) throw ShapeError("backbone channel count must be positive");
  if (mode == BackboneMode::spatial) clip_len = 1;
  if (!is_pow2(clip_len)) {
    throw ShapeError("clip length must be a power of two, got " + std::to_string(clip_len));
  }
  const Index temporal_stages = log2_of(clip_len);
  if (temporal_stages > log2_of(ds) + 1) {
    throw ShapeError("clip length " + std::to_string(clip_len) +
                     " cannot collapse to one frame before the shallow tap");
  }

  BackboneParams p;
  p.mode = mode;
  p.channels = channels;
  p.patch_extent = patch_extent;
  p.clip_len = clip_len;
  p.downsample_factors = downsample_factors;
  p.tap_points = {log2_of(ds), log2_of(dd)};

  Rng rng(seed);
  const Index n_stages = 1 + log2_of(dd);
  Index in_ch = 3;
  Index frames = clip_len;
  for (Index s = 0; s < n_stages; ++s) {
    const Index stride = s == 0 ? 1 : 2;
    BackboneStage stage;
    if (mode == BackboneMode::spatial) {
      stage.conv = random_kernel(rng, {channels, in_ch, 3, 3}, true, stride, 1);
    } else {
      const bool reduce = frames > 1;
      const Index kt = reduce ? 2 : 1;
      stage.conv = random_kernel(rng, {channels, in_ch, kt, 3, 3}, true, stride, 1);
      stage.conv.stride[0] = kt;
      stage.conv.pad_lo[0] = 0;
      stage.conv.pad_hi[0] = 0;
      if (reduce) frames /= 2;
    }
    p.stages.push_back(std::move(stage));
    in_ch = channels;
  }
  return p;
}

BackboneTaps extract_spatial(const Grid& patch, const BackboneParams& params) {
  if (params.mode != BackboneMode::spatial) throw ShapeError("extract_spatial needs a spatial backbone");
  const Shape want{3, params.patch_extent, params.patch_extent};
  if (patch.shape() != want) {
    throw ShapeError("spatial patch must be " + shape_string(want) + ", got " + shape_string(patch.shape()));
  }
  return run_stages(patch, params);
}

BackboneTaps extract_temporal(const Grid& clip, const BackboneParams& params) {
  if (params.mode != BackboneMode::temporal) throw ShapeError("extract_temporal needs a temporal backbone");
  if (clip.rank() != 4 || clip.dim(0) != 3) {
    throw ShapeError("clip must be 3×f×E×E, got " + shape_string(clip.shape()));
  }
  if (clip.dim(1) != params.clip_len) {
    throw ShapeError("clip has " + std::to_string(clip.dim(1)) + " frames, backbone expects " +
                     std::to_string(params.clip_len));
  }
  if (clip.dim(2) != params.patch_extent || clip.dim(3) != params.patch_extent) {
    throw ShapeError("clip spatial extent must be " + std::to_string(params.patch_extent));
  }
  return run_stages(clip, params);
}

Index tap_extent(const BackboneParams& params, int tap) {
  return params.patch_extent / params.downsample_factors[static_cast<std::size_t>(tap)];
}

}  // namespace strack

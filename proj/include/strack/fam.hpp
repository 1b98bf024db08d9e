#ifndef STRACK_FAM_HPP_
#define STRACK_FAM_HPP_

#include <Eigen/Core>

#include <optional>

#include "strack/grid.hpp"
#include "strack/rng.hpp"
#include "strack/tensor_ops.hpp"

namespace strack {

enum class FusionMode { sum, concat };
enum class Pooling { awp, gap };

// Ablation switches. attention=false bypasses the module after fusion;
// pooling=gap replaces adaptive weighted pooling with the plain channel mean.
struct FamSwitches {
  bool attention = true;
  Pooling pooling = Pooling::awp;

  bool operator==(const FamSwitches&) const = default;
};

// Learnable state of one feature aggregation module.
struct FamParams {
  FusionMode mode = FusionMode::concat;
  std::optional<ConvKernel> fusion_conv;  // 2c' -> c', 1×1; [2D ‖ 3D] channel order
  ConvKernel awp_conv;                    // c' -> c', 3×3, pad 1
  double amplification = 2.0;
  Grid attn_kernel;  // odd length k
  double attn_bias = 0.0;

  Index channels() const { return awp_conv.out_channels(); }
  bool operator==(const FamParams&) const = default;
};

// Fusion/AWP convs drawn from `rng` (N(0, 1/fan_in), zero bias), attention
// kernel set to the delta so attention starts as σ(pooled). The fusion conv is
// always created so a stored model can be run in either fusion mode.
FamParams make_fam_params(Rng& rng, Index channels, FusionMode mode, Index kernel_size = 5,
                          double amplification = 2.0);

// 𝒳_S: sum or 1×1-conv of the channel stack.
Grid fuse(const Grid& x2d, const Grid& x3d, const FamParams& params);

// 𝒳_AWP = GAP(A·σ(conv(𝒳_S)) ⊙ 𝒳_S)
Grid awp(const Grid& xs, const FamParams& params);

// 𝒲_C = σ(conv1d(pooled) + bias), every entry in (0, 1).
Grid channel_attention(const Grid& pooled, const FamParams& params);

// Scales channel c of x by weights[c].
Grid reweight_channels(const Grid& x, const Grid& weights);

Grid fam_forward(const Grid& x2d, const Grid& x3d, const FamParams& params,
                 const FamSwitches& switches = {});

struct FamTrace {
  Grid x2d, x3d;
  Grid fused;        // 𝒳_S
  Grid awp_logits;   // conv(𝒳_S); empty under GAP pooling
  Grid pooled;       // 𝒳_AWP or GAP(𝒳_S)
  Grid attn_logits;  // conv1d(pooled) + bias
  Grid attention;    // 𝒲_C
  Grid output;       // 𝒳_FAM
};

FamTrace fam_forward_traced(const Grid& x2d, const Grid& x3d, const FamParams& params,
                            const FamSwitches& switches = {});

// Gradients with the same layout as FamParams (mode copied from the input).
struct FamGrads {
  Grid x2d;
  Grid x3d;
  FamParams params;
};

FamGrads fam_backward(const FamTrace& trace, const FamParams& params, const FamSwitches& switches,
                      const Grid& upstream);
FamGrads fam_backward(const Grid& x2d, const Grid& x3d, const FamParams& params,
                      const FamSwitches& switches, const Grid& upstream);

// Flat parameter vector in a fixed order: fusion weights, fusion bias, AWP
// weights, AWP bias, amplification, attention kernel, attention bias.
Eigen::VectorXd pack(const FamParams& params);
void unpack(const Eigen::VectorXd& flat, FamParams& params);

}  // namespace strack

#endif  // STRACK_FAM_HPP_

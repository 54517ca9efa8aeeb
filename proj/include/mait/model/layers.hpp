#pragma once

#include <utility>

#include "mait/model/config.hpp"
#include "mait/num/diff_array.hpp"

namespace mait::model {

using num::DiffArray;

/// Multi-head self-attention weights. Projections are fused across heads:
/// head h owns columns [h * d_k, (h + 1) * d_k) of wq, wk and wv.
struct AttentionLayerParams {
  DiffArray wq;  // d x (H * d_k)
  DiffArray wk;
  DiffArray wv;
  DiffArray wz;  // (H * d_k) x d
  std::size_t heads = 1;
  std::size_t d_k = 1;
};

/// Diagonal state-space mixer. Channels C equal the model width; each channel
/// carries d_state hidden states.
struct MambaLayerParams {
  DiffArray in_proj;     // d x C
  DiffArray a_raw;       // C x S, realized A = -softplus(a_raw)
  DiffArray b;           // C x S
  DiffArray c;           // C x S
  DiffArray delta_proj;  // d x C, selective mode
  DiffArray delta_bias;  // 1 x C, selective mode
  DiffArray delta_raw;   // 1 x 1, LTI mode: delta = softplus(delta_raw)
  DiffArray out_proj;    // C x d
  SsmMode mode = SsmMode::selective;
};

/// Pre-norm residual sublayers shared by both layer kinds.
struct SublayerParams {
  DiffArray mix_norm;  // 1 x d gain
  DiffArray mlp_norm;  // 1 x d gain
  DiffArray w1;        // d x (mlp_mult * d)
  DiffArray b1;
  DiffArray w2;        // (mlp_mult * d) x d
  DiffArray b2;
};

struct EncoderLayer {
  LayerKind kind = LayerKind::attention;
  AttentionLayerParams attention;  // valid when kind == attention
  MambaLayerParams mamba;          // valid when kind == mamba
  SublayerParams sub;
};

enum class SsmPath { scan, kernel };

/// Per-head Q/K/V projections, scaled dot-product softmax over nodes, head merge.
/// Returns the merged multi-head output before any residual.
DiffArray attention_mix(const AttentionLayerParams& p, const DiffArray& x);

/// Zero-order-hold discretization of a diagonal system, elementwise:
/// A_bar = exp(delta * a), B_bar = delta * b * exprel(delta * a).
/// `delta` has the shape of `a` or is a scalar. Throws if any delta <= 0.
std::pair<DiffArray, DiffArray> discretize(const DiffArray& a, const DiffArray& b,
                                           const DiffArray& delta);
/// Scalar form returning (A_bar, B_bar).
std::pair<double, double> discretize(double a, double b, double delta);
/// Dense form for an explicitly diagonal n x n matrix `a` and n x 1 `b`.
/// Throws if `a` has a non-zero off-diagonal entry. Returns (n x n, n x 1).
std::pair<DiffArray, DiffArray> discretize_diagonal_matrix(const DiffArray& a, const DiffArray& b,
                                                           double delta);

/// Sequential recurrence h_t = A_bar_t h_{t-1} + B_bar_t x_t, y_t = sum_s C h_t,
/// with h_{-1} = 0. x is T x C; a_bar and b_bar are T x (C*S), or 1 x (C*S) for
/// time-invariant parameters; c is C x S.
DiffArray ssm_scan(const DiffArray& x, const DiffArray& a_bar, const DiffArray& b_bar,
                   const DiffArray& c);

/// Causal convolution of x with the kernel K_k = sum_s C A_bar^k B_bar for
/// k = 0..T-1. Time-invariant parameters only (a_bar, b_bar are 1 x (C*S)).
DiffArray ssm_conv(const DiffArray& x, const DiffArray& a_bar, const DiffArray& b_bar,
                   const DiffArray& c);

/// Discretized parameters of a layer for a given scan input x (T x C).
struct SsmDiscretization {
  DiffArray a_bar;
  DiffArray b_bar;
  DiffArray delta;  // T x C (selective) or 1 x 1 (LTI)
};
SsmDiscretization discretize_layer(const MambaLayerParams& p, const DiffArray& x);

/// Layer-level scan: computes delta (softplus of delta_proj for selective mode,
/// softplus(delta_raw) for LTI), discretizes, and runs the recurrence.
DiffArray ssm_scan(const DiffArray& x, const MambaLayerParams& p);
/// Layer-level kernel path. Throws std::invalid_argument in selective mode.
DiffArray ssm_conv(const DiffArray& x, const MambaLayerParams& p);

/// in_proj, state-space mixing over the node axis, out_proj. No residual.
DiffArray mamba_mix(const MambaLayerParams& p, const DiffArray& x, SsmPath path = SsmPath::scan);

/// h + Mixer(RMSNorm(h)), then + MLP(RMSNorm(.)) with a tanh MLP.
DiffArray encoder_block(const EncoderLayer& layer, const DiffArray& h, SsmPath path = SsmPath::scan);

DiffArray attention_layer(const EncoderLayer& layer, const DiffArray& h);
DiffArray mamba_layer(const EncoderLayer& layer, const DiffArray& h, SsmPath path = SsmPath::scan);

/// rms_norm(x) scaled by a 1 x d gain.
DiffArray gained_rms_norm(const DiffArray& x, const DiffArray& gain);

}  // namespace mait::model

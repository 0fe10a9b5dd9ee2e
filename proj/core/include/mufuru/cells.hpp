#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "mufuru/tensor.hpp"

namespace mufuru {

/// Cell geometry. The output of every cell here equals its state, so the
/// output size is the state size.
struct CellShape {
  int input_size = 0;  // N
  int state_size = 0;  // M
};

/// The composition operations combining previous state s with candidate
/// features v, element-wise:
///   keep(s,v) = s            replace(s,v) = v
///   max/min per dimension    mul(s,v) = s*v
///   diff(s,v) = 0.5*|s - v|  forget(s,v) = 0
enum class CompositionOp { Keep, Replace, Max, Min, Mul, Diff, Forget };

inline constexpr std::array<CompositionOp, 7> kAllCompositionOps = {
    CompositionOp::Keep, CompositionOp::Replace, CompositionOp::Max,
    CompositionOp::Min,  CompositionOp::Mul,     CompositionOp::Diff,
    CompositionOp::Forget};

std::string_view op_name(CompositionOp op);
std::optional<CompositionOp> op_from_name(std::string_view name);

/// Applies one composition operation, built from tape primitives so it is
/// differentiable almost everywhere.
Tensor apply_composition(Tape& tape, CompositionOp op, const Tensor& s,
                         const Tensor& v);

// --- parameters -------------------------------------------------------------

/// tanh cell: s' = h = tanh(W [x;s] + b), W is M x (N+M).
struct VanillaParams {
  Tensor w;
  Tensor b;
};

/// Gate rows of w_u/b_u are stacked [reset; update] top to bottom: rows
/// 0..M-1 produce r, rows M..2M-1 produce u. Serialized checkpoints rely on
/// this layout.
struct GRUParams {
  Tensor w_u;  // 2M x (N+M)
  Tensor b_u;  // 2M
  Tensor w_v;  // M x (N+M)
  Tensor b_v;  // M
};

/// One operation-controller projection (w_p, b_p) per composition op, bound
/// positionally to `ops`.
struct MuFuRUParams {
  Tensor w_r;  // M x (N+M)
  Tensor b_r;  // M
  Tensor w_v;  // M x (N+M)
  Tensor b_v;  // M
  std::vector<Tensor> w_p;  // each M x (N+M)
  std::vector<Tensor> b_p;  // each M
  std::vector<CompositionOp> ops;
};

/// Weight matrices sampled uniformly from +-sqrt(6/(fan_in+fan_out)), biases
/// zero, deterministic given the generator state.
VanillaParams init_vanilla(CellShape shape, Rng& rng);
GRUParams init_gru(CellShape shape, Rng& rng);
MuFuRUParams init_mufuru(CellShape shape, std::vector<CompositionOp> ops,
                         Rng& rng);

/// Fan-based uniform init for a single matrix (helper shared with heads).
Tensor glorot_uniform(int rows, int cols, Rng& rng);

// --- steps ------------------------------------------------------------------

struct StepOut {
  Tensor state;
  Tensor output;
};

/// Inputs are [N]/[M] vectors or [B,N]/[B,M] batches; outputs match.
StepOut vanilla_step(Tape& tape, const VanillaParams& p, const Tensor& x,
                     const Tensor& s);

/// [r;u] = sigmoid(W_u [x;s] + b_u); v = tanh(W_v [x; r*s] + b_v);
/// s' = h = u*s + (1-u)*v. The update gate weights the old state.
StepOut gru_step(Tape& tape, const GRUParams& p, const Tensor& x,
                 const Tensor& s);

/// Normalized per-dimension operation weights: softmax over the stacked
/// logits W_p^j [x;s] + b_p^j. One output tensor per op, each summing to 1
/// with its peers at every dimension.
std::vector<Tensor> mufuru_controller(Tape& tape, const MuFuRUParams& p,
                                      const Tensor& x, const Tensor& s);

/// r = sigmoid(W_r [x;s] + b_r) (all ones when force_reset_one);
/// v = tanh(W_v [x; r*s] + b_v); s' = h = sum_j p^j * op^j(s, v).
/// When `weights_out` is given, the controller weights are copied there.
StepOut mufuru_step(Tape& tape, const MuFuRUParams& p, const Tensor& x,
                    const Tensor& s, bool force_reset_one = false,
                    std::vector<Tensor>* weights_out = nullptr);

// --- reductions to simpler cells --------------------------------------------

/// MuFuRU with ops = [keep, replace] that reproduces the given GRU exactly:
/// the keep logits are the update-gate rows, the replace logits are zero, so
/// the two-way softmax equals (u, 1-u).
MuFuRUParams map_gru_to_mufuru(const GRUParams& g);

/// MuFuRU with ops = [replace] that reproduces the given tanh cell exactly
/// when stepped with force_reset_one = true.
MuFuRUParams map_vanilla_to_mufuru(const VanillaParams& p);

// --- cell wrapper and unrolling ----------------------------------------------

enum class CellKind { Vanilla, Gru, Mufuru };

std::string_view cell_kind_name(CellKind kind);
std::optional<CellKind> cell_kind_from_name(std::string_view name);

/// A cell kind plus its parameters; the uniform handle the training loops,
/// checkpoints, and CLI operate on.
struct Cell {
  CellShape shape{};
  std::variant<VanillaParams, GRUParams, MuFuRUParams> params;

  CellKind kind() const;
  /// Parameters in declared order (the checkpoint/optimizer order).
  std::vector<Tensor> parameters() const;
  std::int64_t parameter_count() const;
  /// Operation list (empty for non-MuFuRU cells).
  std::span<const CompositionOp> ops() const;
  /// Deep copy (fresh parameter tensors).
  Cell clone() const;
};

Cell make_cell(CellKind kind, CellShape shape,
               std::span<const CompositionOp> ops, Rng& rng);

struct StepOptions {
  bool force_reset_one = false;
  std::vector<Tensor>* weights_out = nullptr;
};

StepOut cell_step(Tape& tape, const Cell& cell, const Tensor& x,
                  const Tensor& s, const StepOptions& opts = {});

struct UnrollOptions {
  bool record_op_weights = false;
  bool force_reset_one = false;
};

struct Unrolled {
  std::vector<Tensor> states;
  std::vector<Tensor> outputs;
  /// op_weights[t][j]: controller weight of op j at step t (MuFuRU only,
  /// when requested).
  std::vector<std::vector<Tensor>> op_weights;
};

/// Applies the cell from t = 1..T starting at s0. s0 defaults to zeros when
/// left undefined. Throws on an empty input sequence.
Unrolled unroll(Tape& tape, const Cell& cell, std::span<const Tensor> xs,
                Tensor s0 = {}, const UnrollOptions& opts = {});

}  // namespace mufuru

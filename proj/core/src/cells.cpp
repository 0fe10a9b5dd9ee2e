#include "mufuru/cells.hpp"

#include <cmath>
#include <cstring>

namespace mufuru {

std::string_view op_name(CompositionOp op) {
  switch (op) {
    case CompositionOp::Keep: return "keep";
    case CompositionOp::Replace: return "replace";
    case CompositionOp::Max: return "max";
    case CompositionOp::Min: return "min";
    case CompositionOp::Mul: return "mul";
    case CompositionOp::Diff: return "diff";
    case CompositionOp::Forget: return "forget";
  }
  return "?";
}

std::optional<CompositionOp> op_from_name(std::string_view name) {
  for (CompositionOp op : kAllCompositionOps) {
    if (op_name(op) == name) return op;
  }
  return std::nullopt;
}

Tensor apply_composition(Tape& tape, CompositionOp op, const Tensor& s,
                         const Tensor& v) {
  switch (op) {
    case CompositionOp::Keep:
      return s;
    case CompositionOp::Replace:
      return v;
    case CompositionOp::Max:
      return tape.max(s, v);
    case CompositionOp::Min:
      return tape.min(s, v);
    case CompositionOp::Mul:
      return tape.mul(s, v);
    case CompositionOp::Diff:
      return tape.scale(tape.abs(tape.sub(s, v)), 0.5);
    case CompositionOp::Forget:
      return Tensor::zeros(s.shape());
  }
  throw ArgumentError("unknown composition op");
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

Tensor glorot_uniform(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  return Tensor::uniform({rows, cols}, -bound, bound, rng, true);
}

VanillaParams init_vanilla(CellShape shape, Rng& rng) {
  const int n = shape.input_size, m = shape.state_size;
  VanillaParams p;
  p.w = glorot_uniform(m, n + m, rng);
  p.b = Tensor::zeros({m}, true);
  return p;
}

GRUParams init_gru(CellShape shape, Rng& rng) {
  const int n = shape.input_size, m = shape.state_size;
  GRUParams p;
  p.w_u = glorot_uniform(2 * m, n + m, rng);
  p.b_u = Tensor::zeros({2 * m}, true);
  p.w_v = glorot_uniform(m, n + m, rng);
  p.b_v = Tensor::zeros({m}, true);
  return p;
}

MuFuRUParams init_mufuru(CellShape shape, std::vector<CompositionOp> ops,
                         Rng& rng) {
  if (ops.empty()) throw ArgumentError("MuFuRU needs at least one operation");
  const int n = shape.input_size, m = shape.state_size;
  MuFuRUParams p;
  p.w_r = glorot_uniform(m, n + m, rng);
  p.b_r = Tensor::zeros({m}, true);
  p.w_v = glorot_uniform(m, n + m, rng);
  p.b_v = Tensor::zeros({m}, true);
  p.ops = std::move(ops);
  for (std::size_t j = 0; j < p.ops.size(); ++j) {
    p.w_p.push_back(glorot_uniform(m, n + m, rng));
    p.b_p.push_back(Tensor::zeros({m}, true));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

namespace {

// Promote a rank-1 vector to a one-row batch so step kernels only deal with
// [B, n] operands; results are demoted back by the caller.
Tensor promote(Tape& tape, const Tensor& t) {
  return t.rank() == 1 ? tape.reshape(t, {1, t.shape()[0]}) : t;
}

Tensor demote(Tape& tape, const Tensor& t, bool was_vector) {
  return was_vector ? tape.reshape(t, {t.shape()[1]}) : t;
}

void check_step_shapes(const Tensor& x, const Tensor& s) {
  if (x.rank() != s.rank() || x.rank() < 1 || x.rank() > 2) {
    throw DimensionError("cell step expects matching vector or batch inputs, "
                         "got x " + shape_str(x.shape()) + ", s " +
                         shape_str(s.shape()));
  }
  if (x.rank() == 2 && x.shape()[0] != s.shape()[0]) {
    throw DimensionError("cell step batch extents differ: x " +
                         shape_str(x.shape()) + ", s " + shape_str(s.shape()));
  }
}

}  // namespace

StepOut vanilla_step(Tape& tape, const VanillaParams& p, const Tensor& x,
                     const Tensor& s) {
  check_step_shapes(x, s);
  const bool vec = x.rank() == 1;
  Tensor xb = promote(tape, x), sb = promote(tape, s);
  Tensor k = tape.concat(xb, sb);
  Tensor state = tape.tanh(tape.linear(k, p.w, p.b));
  state = demote(tape, state, vec);
  return {state, state};
}

StepOut gru_step(Tape& tape, const GRUParams& p, const Tensor& x,
                 const Tensor& s) {
  check_step_shapes(x, s);
  const bool vec = x.rank() == 1;
  const int m = p.w_v.shape()[0];
  Tensor xb = promote(tape, x), sb = promote(tape, s);
  Tensor k = tape.concat(xb, sb);
  Tensor gates = tape.sigmoid(tape.linear(k, p.w_u, p.b_u));
  Tensor r = tape.slice(gates, 0, m);
  Tensor u = tape.slice(gates, m, 2 * m);
  Tensor v = tape.tanh(
      tape.linear(tape.concat(xb, tape.mul(r, sb)), p.w_v, p.b_v));
  Tensor ones = Tensor::full(u.shape(), 1.0);
  Tensor state = tape.add(tape.mul(u, sb), tape.mul(tape.sub(ones, u), v));
  state = demote(tape, state, vec);
  return {state, state};
}

std::vector<Tensor> mufuru_controller(Tape& tape, const MuFuRUParams& p,
                                      const Tensor& x, const Tensor& s) {
  check_step_shapes(x, s);
  const bool vec = x.rank() == 1;
  Tensor xb = promote(tape, x), sb = promote(tape, s);
  Tensor k = tape.concat(xb, sb);
  std::vector<Tensor> logits;
  logits.reserve(p.ops.size());
  for (std::size_t j = 0; j < p.ops.size(); ++j) {
    logits.push_back(tape.linear(k, p.w_p[j], p.b_p[j]));
  }
  std::vector<Tensor> weights = tape.softmax_stack(logits);
  if (vec) {
    for (Tensor& w : weights) w = demote(tape, w, true);
  }
  return weights;
}

StepOut mufuru_step(Tape& tape, const MuFuRUParams& p, const Tensor& x,
                    const Tensor& s, bool force_reset_one,
                    std::vector<Tensor>* weights_out) {
  check_step_shapes(x, s);
  const bool vec = x.rank() == 1;
  Tensor xb = promote(tape, x), sb = promote(tape, s);
  Tensor k = tape.concat(xb, sb);

  Tensor gated_state;
  if (force_reset_one) {
    gated_state = sb;
  } else {
    Tensor r = tape.sigmoid(tape.linear(k, p.w_r, p.b_r));
    gated_state = tape.mul(r, sb);
  }
  Tensor v = tape.tanh(tape.linear(tape.concat(xb, gated_state), p.w_v, p.b_v));

  std::vector<Tensor> logits;
  logits.reserve(p.ops.size());
  for (std::size_t j = 0; j < p.ops.size(); ++j) {
    logits.push_back(tape.linear(k, p.w_p[j], p.b_p[j]));
  }
  std::vector<Tensor> weights = tape.softmax_stack(logits);

  Tensor state;
  for (std::size_t j = 0; j < p.ops.size(); ++j) {
    Tensor term = tape.mul(weights[j], apply_composition(tape, p.ops[j], sb, v));
    state = state.defined() ? tape.add(state, term) : term;
  }
  state = demote(tape, state, vec);
  if (weights_out) {
    weights_out->clear();
    for (Tensor& w : weights) {
      weights_out->push_back(vec ? demote(tape, w, true) : w);
    }
  }
  return {state, state};
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace {

// Value copy of rows [lo, hi) of a matrix into a fresh leaf.
Tensor copy_rows(const Tensor& m, int lo, int hi) {
  const int cols = m.rank() == 2 ? m.shape()[1] : 1;
  std::vector<double> data(static_cast<std::size_t>(hi - lo) * cols);
  std::memcpy(data.data(), m.value().data() + static_cast<std::size_t>(lo) * cols,
              sizeof(double) * data.size());
  if (m.rank() == 1) return Tensor::from({hi - lo}, std::move(data), true);
  return Tensor::from({hi - lo, cols}, std::move(data), true);
}

}  // namespace

MuFuRUParams map_gru_to_mufuru(const GRUParams& g) {
  const int m = g.w_v.shape()[0];
  MuFuRUParams p;
  p.ops = {CompositionOp::Keep, CompositionOp::Replace};
  p.w_r = copy_rows(g.w_u, 0, m);
  p.b_r = copy_rows(g.b_u, 0, m);
  p.w_v = g.w_v.clone();
  p.b_v = g.b_v.clone();
  // keep weight = softmax(u-logit, 0) = sigmoid(u-logit) = u,
  // replace weight = 1 - u, so the convex combination equals the GRU update.
  p.w_p.push_back(copy_rows(g.w_u, m, 2 * m));
  p.b_p.push_back(copy_rows(g.b_u, m, 2 * m));
  p.w_p.push_back(Tensor::zeros(g.w_v.shape(), true));
  p.b_p.push_back(Tensor::zeros(g.b_v.shape(), true));
  return p;
}

MuFuRUParams map_vanilla_to_mufuru(const VanillaParams& vp) {
  MuFuRUParams p;
  p.ops = {CompositionOp::Replace};
  p.w_r = Tensor::zeros(vp.w.shape(), true);  // unused under force_reset_one
  p.b_r = Tensor::zeros(vp.b.shape(), true);
  p.w_v = vp.w.clone();
  p.b_v = vp.b.clone();
  p.w_p.push_back(Tensor::zeros(vp.w.shape(), true));
  p.b_p.push_back(Tensor::zeros(vp.b.shape(), true));
  return p;
}

// ---------------------------------------------------------------------------
// Cell wrapper
// ---------------------------------------------------------------------------

std::string_view cell_kind_name(CellKind kind) {
  switch (kind) {
    case CellKind::Vanilla: return "vanilla";
    case CellKind::Gru: return "gru";
    case CellKind::Mufuru: return "mufuru";
  }
  return "?";
}

std::optional<CellKind> cell_kind_from_name(std::string_view name) {
  if (name == "vanilla") return CellKind::Vanilla;
  if (name == "gru") return CellKind::Gru;
  if (name == "mufuru") return CellKind::Mufuru;
  return std::nullopt;
}

CellKind Cell::kind() const {
  if (std::holds_alternative<VanillaParams>(params)) return CellKind::Vanilla;
  if (std::holds_alternative<GRUParams>(params)) return CellKind::Gru;
  return CellKind::Mufuru;
}

std::vector<Tensor> Cell::parameters() const {
  std::vector<Tensor> out;
  std::visit(
      [&out](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, VanillaParams>) {
          out = {p.w, p.b};
        } else if constexpr (std::is_same_v<P, GRUParams>) {
          out = {p.w_u, p.b_u, p.w_v, p.b_v};
        } else {
          out = {p.w_r, p.b_r, p.w_v, p.b_v};
          for (std::size_t j = 0; j < p.w_p.size(); ++j) {
            out.push_back(p.w_p[j]);
            out.push_back(p.b_p[j]);
          }
        }
      },
      params);
  return out;
}

std::int64_t Cell::parameter_count() const {
  std::int64_t n = 0;
  for (const Tensor& t : parameters()) n += t.size();
  return n;
}

std::span<const CompositionOp> Cell::ops() const {
  if (const auto* p = std::get_if<MuFuRUParams>(&params)) return p->ops;
  return {};
}

Cell Cell::clone() const {
  Cell out;
  out.shape = shape;
  std::visit(
      [&out](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, VanillaParams>) {
          out.params = VanillaParams{p.w.clone(), p.b.clone()};
        } else if constexpr (std::is_same_v<P, GRUParams>) {
          out.params = GRUParams{p.w_u.clone(), p.b_u.clone(), p.w_v.clone(),
                                 p.b_v.clone()};
        } else {
          MuFuRUParams q;
          q.w_r = p.w_r.clone();
          q.b_r = p.b_r.clone();
          q.w_v = p.w_v.clone();
          q.b_v = p.b_v.clone();
          q.ops = p.ops;
          for (std::size_t j = 0; j < p.w_p.size(); ++j) {
            q.w_p.push_back(p.w_p[j].clone());
            q.b_p.push_back(p.b_p[j].clone());
          }
          out.params = std::move(q);
        }
      },
      params);
  return out;
}

Cell make_cell(CellKind kind, CellShape shape,
               std::span<const CompositionOp> ops, Rng& rng) {
  Cell cell;
  cell.shape = shape;
  switch (kind) {
    case CellKind::Vanilla:
      cell.params = init_vanilla(shape, rng);
      break;
    case CellKind::Gru:
      cell.params = init_gru(shape, rng);
      break;
    case CellKind::Mufuru: {
      std::vector<CompositionOp> op_list(ops.begin(), ops.end());
      if (op_list.empty()) {
        op_list.assign(kAllCompositionOps.begin(), kAllCompositionOps.end());
      }
      cell.params = init_mufuru(shape, std::move(op_list), rng);
      break;
    }
  }
  return cell;
}

StepOut cell_step(Tape& tape, const Cell& cell, const Tensor& x,
                  const Tensor& s, const StepOptions& opts) {
  return std::visit(
      [&](const auto& p) -> StepOut {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, VanillaParams>) {
          return vanilla_step(tape, p, x, s);
        } else if constexpr (std::is_same_v<P, GRUParams>) {
          return gru_step(tape, p, x, s);
        } else {
          return mufuru_step(tape, p, x, s, opts.force_reset_one,
                             opts.weights_out);
        }
      },
      cell.params);
}

Unrolled unroll(Tape& tape, const Cell& cell, std::span<const Tensor> xs,
                Tensor s0, const UnrollOptions& opts) {
  if (xs.empty()) throw ArgumentError("unroll requires a non-empty sequence");
  const int m = cell.shape.state_size;
  if (!s0.defined()) {
    s0 = xs[0].rank() == 2 ? Tensor::zeros({xs[0].shape()[0], m})
                           : Tensor::zeros({m});
  }
  Unrolled out;
  out.states.reserve(xs.size());
  out.outputs.reserve(xs.size());
  Tensor s = s0;
  const bool mufuru = cell.kind() == CellKind::Mufuru;
  for (const Tensor& x : xs) {
    StepOptions step_opts;
    step_opts.force_reset_one = opts.force_reset_one;
    std::vector<Tensor> weights;
    if (mufuru && opts.record_op_weights) step_opts.weights_out = &weights;
    StepOut so = cell_step(tape, cell, x, s, step_opts);
    s = so.state;
    out.states.push_back(so.state);
    out.outputs.push_back(so.output);
    if (mufuru && opts.record_op_weights) {
      out.op_weights.push_back(std::move(weights));
    }
  }
  return out;
}

}  // namespace mufuru

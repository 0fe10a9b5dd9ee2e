#include "mufuru/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <utility>

namespace mufuru {

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

static void check_extents(const Shape& shape) {
  for (int e : shape) {
    if (e < 0) throw ArgumentError("negative extent in shape " + shape_str(shape));
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_extents(shape);
  auto d = std::make_shared<TensorData>();
  d->value.assign(static_cast<std::size_t>(shape_size(shape)), 0.0);
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.value()) v = fill;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  check_extents(shape);
  if (shape_size(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->value = std::move(data);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double v) { return from({}, {v}); }

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.value()) v = rng.uniform(lo, hi);
  return t;
}

std::span<double> Tensor::grad() {
  if (data_->grad.empty()) data_->grad.assign(data_->value.size(), 0.0);
  return data_->grad;
}

std::span<const double> Tensor::grad() const {
  if (data_->grad.empty()) {
    throw ArgumentError("gradient not populated; run backward first");
  }
  return data_->grad;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ArgumentError("item() requires a size-1 tensor, got " +
                        shape_str(shape()));
  }
  return data_->value[0];
}

double Tensor::at(std::int64_t flat_index) const {
  if (flat_index < 0 || flat_index >= size()) {
    throw ArgumentError("flat index out of range");
  }
  return data_->value[static_cast<std::size_t>(flat_index)];
}

Tensor Tensor::clone() const {
  return Tensor::from(data_->shape, data_->value, data_->requires_grad);
}

void Tensor::copy_values_from(const Tensor& src) {
  if (src.size() != size()) {
    throw DimensionError("copy_values_from size mismatch: " +
                         shape_str(src.shape()) + " vs " + shape_str(shape()));
  }
  data_->value = src.data_->value;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

bool ew_is_unary(EwKind kind) {
  switch (kind) {
    case EwKind::Tanh:
    case EwKind::Sigmoid:
    case EwKind::Neg:
    case EwKind::Abs:
    case EwKind::Exp:
    case EwKind::Log:
    case EwKind::Scale:
      return true;
    default:
      return false;
  }
}

Tensor Tape::alloc(Shape shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad);
}

void Tape::touch(const Tensor& t) {
  // Tensors that do not require grad are never read from nor accumulated
  // into during replay, so they need no zeroed buffer.
  if (recording_ && t.requires_grad()) touched_.push_back(t.handle());
}

void Tape::record(std::function<void()> backward_rule) {
  if (recording_) entries_.push_back(std::move(backward_rule));
}

static std::span<double> grad_of(const std::shared_ptr<TensorData>& d) {
  return d->grad;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul shapes incompatible: " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = alloc({m, n}, a.requires_grad() || b.requires_grad());
  {
    const double* pa = a.value().data();
    const double* pb = b.value().data();
    double* pc = out.value().data();
    for (int i = 0; i < m; ++i) {
      for (int p = 0; p < k; ++p) {
        const double av = pa[i * k + p];
        const double* brow = pb + p * n;
        double* crow = pc + i * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  if (recording_ && out.requires_grad()) {
    touch(a);
    touch(b);
    touch(out);
    auto ad = a.handle(), bd = b.handle(), od = out.handle();
    record([ad, bd, od, m, k, n] {
      const double* dc = od->grad.data();
      if (ad->requires_grad) {
        double* da = grad_of(ad).data();
        const double* pb = bd->value.data();
        // dA[i,p] += dot(dC[i,:], B[p,:])
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            const double* dcrow = dc + i * n;
            const double* brow = pb + p * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
            da[i * k + p] += acc;
          }
        }
      }
      if (bd->requires_grad) {
        double* db = grad_of(bd).data();
        const double* pa = ad->value.data();
        // dB[p,:] += A[i,p] * dC[i,:]
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* dcrow = dc + i * n;
            double* dbrow = db + p * n;
            for (int j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || b.rank() != 1 || b.shape()[0] != w.shape()[0]) {
    throw DimensionError("linear weights incompatible: W " +
                         shape_str(w.shape()) + ", b " + shape_str(b.shape()));
  }
  const bool vec = x.rank() == 1;
  const int batch = vec ? 1 : (x.rank() == 2 ? x.shape()[0] : -1);
  const int k = vec ? x.shape()[0] : (x.rank() == 2 ? x.shape()[1] : -1);
  const int m = w.shape()[0];
  if (batch < 0 || k != w.shape()[1]) {
    throw DimensionError("linear input incompatible: x " + shape_str(x.shape()) +
                         ", W " + shape_str(w.shape()));
  }
  Shape out_shape = vec ? Shape{m} : Shape{batch, m};
  Tensor out = alloc(std::move(out_shape), x.requires_grad() ||
                                               w.requires_grad() ||
                                               b.requires_grad());
  {
    const double* px = x.value().data();
    const double* pw = w.value().data();
    const double* pb = b.value().data();
    double* py = out.value().data();
    for (int i = 0; i < batch; ++i) {
      const double* xrow = px + static_cast<std::size_t>(i) * k;
      double* yrow = py + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) {
        const double* wrow = pw + static_cast<std::size_t>(j) * k;
        double acc = pb[j];
        for (int p = 0; p < k; ++p) acc += xrow[p] * wrow[p];
        yrow[j] = acc;
      }
    }
  }
  if (recording_ && out.requires_grad()) {
    touch(x);
    touch(w);
    touch(b);
    touch(out);
    auto xd = x.handle(), wd = w.handle(), bd = b.handle(), od = out.handle();
    record([xd, wd, bd, od, batch, k, m] {
      const double* dy = od->grad.data();
      const double* px = xd->value.data();
      const double* pw = wd->value.data();
      if (xd->requires_grad) {
        double* dx = grad_of(xd).data();
        for (int i = 0; i < batch; ++i) {
          const double* dyrow = dy + static_cast<std::size_t>(i) * m;
          double* dxrow = dx + static_cast<std::size_t>(i) * k;
          for (int j = 0; j < m; ++j) {
            const double g = dyrow[j];
            const double* wrow = pw + static_cast<std::size_t>(j) * k;
            for (int p = 0; p < k; ++p) dxrow[p] += g * wrow[p];
          }
        }
      }
      if (wd->requires_grad) {
        double* dw = grad_of(wd).data();
        for (int i = 0; i < batch; ++i) {
          const double* dyrow = dy + static_cast<std::size_t>(i) * m;
          const double* xrow = px + static_cast<std::size_t>(i) * k;
          for (int j = 0; j < m; ++j) {
            const double g = dyrow[j];
            double* dwrow = dw + static_cast<std::size_t>(j) * k;
            for (int p = 0; p < k; ++p) dwrow[p] += g * xrow[p];
          }
        }
      }
      if (bd->requires_grad) {
        double* db = grad_of(bd).data();
        for (int i = 0; i < batch; ++i) {
          const double* dyrow = dy + static_cast<std::size_t>(i) * m;
          for (int j = 0; j < m; ++j) db[j] += dyrow[j];
        }
      }
    });
  }
  return out;
}

Tensor Tape::elementwise(EwKind kind, const Tensor& a) {
  if (!ew_is_unary(kind)) {
    throw ArgumentError("binary element-wise kind used without second operand");
  }
  if (kind == EwKind::Scale) {
    throw ArgumentError("scale requires a constant; use elementwise_scale");
  }
  const std::int64_t n = a.size();
  Tensor out = alloc(a.shape(), a.requires_grad());
  const double* pa = a.value().data();
  double* po = out.value().data();
  switch (kind) {
    case EwKind::Tanh:
      for (std::int64_t i = 0; i < n; ++i) po[i] = std::tanh(pa[i]);
      break;
    case EwKind::Sigmoid:
      for (std::int64_t i = 0; i < n; ++i) po[i] = stable_sigmoid(pa[i]);
      break;
    case EwKind::Neg:
      for (std::int64_t i = 0; i < n; ++i) po[i] = -pa[i];
      break;
    case EwKind::Abs:
      for (std::int64_t i = 0; i < n; ++i) po[i] = std::fabs(pa[i]);
      break;
    case EwKind::Exp:
      for (std::int64_t i = 0; i < n; ++i) po[i] = std::exp(pa[i]);
      break;
    case EwKind::Log:
      for (std::int64_t i = 0; i < n; ++i) {
        if (pa[i] <= 0.0) {
          throw MathDomainError("log of non-positive value " +
                                std::to_string(pa[i]));
        }
        po[i] = std::log(pa[i]);
      }
      break;
    default:
      break;
  }
  if (recording_ && out.requires_grad()) {
    touch(a);
    touch(out);
    auto ad = a.handle(), od = out.handle();
    record([ad, od, kind, n] {
      if (!ad->requires_grad) return;
      double* da = grad_of(ad).data();
      const double* dy = od->grad.data();
      const double* y = od->value.data();
      const double* x = ad->value.data();
      switch (kind) {
        case EwKind::Tanh:
          for (std::int64_t i = 0; i < n; ++i)
            da[i] += (1.0 - y[i] * y[i]) * dy[i];
          break;
        case EwKind::Sigmoid:
          for (std::int64_t i = 0; i < n; ++i)
            da[i] += y[i] * (1.0 - y[i]) * dy[i];
          break;
        case EwKind::Neg:
          for (std::int64_t i = 0; i < n; ++i) da[i] -= dy[i];
          break;
        case EwKind::Abs:
          // subgradient 0 at the kink
          for (std::int64_t i = 0; i < n; ++i) {
            const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
            da[i] += s * dy[i];
          }
          break;
        case EwKind::Exp:
          for (std::int64_t i = 0; i < n; ++i) da[i] += y[i] * dy[i];
          break;
        case EwKind::Log:
          for (std::int64_t i = 0; i < n; ++i) da[i] += dy[i] / x[i];
          break;
        default:
          break;
      }
    });
  }
  return out;
}

Tensor Tape::elementwise_scale(const Tensor& a, double c) {
  const std::int64_t n = a.size();
  Tensor out = alloc(a.shape(), a.requires_grad());
  const double* pa = a.value().data();
  double* po = out.value().data();
  for (std::int64_t i = 0; i < n; ++i) po[i] = c * pa[i];
  if (recording_ && out.requires_grad()) {
    touch(a);
    touch(out);
    auto ad = a.handle(), od = out.handle();
    record([ad, od, c, n] {
      if (!ad->requires_grad) return;
      double* da = grad_of(ad).data();
      const double* dy = od->grad.data();
      for (std::int64_t i = 0; i < n; ++i) da[i] += c * dy[i];
    });
  }
  return out;
}

Tensor Tape::elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
  if (ew_is_unary(kind)) {
    throw ArgumentError("unary element-wise kind used with two operands");
  }
  if (a.shape() != b.shape()) {
    throw DimensionError("element-wise shape mismatch: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const std::int64_t n = a.size();
  Tensor out = alloc(a.shape(), a.requires_grad() || b.requires_grad());
  const double* pa = a.value().data();
  const double* pb = b.value().data();
  double* po = out.value().data();
  switch (kind) {
    case EwKind::Add:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
      break;
    case EwKind::Sub:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
      break;
    case EwKind::Mul:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
      break;
    case EwKind::Max:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] >= pb[i] ? pa[i] : pb[i];
      break;
    case EwKind::Min:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] <= pb[i] ? pa[i] : pb[i];
      break;
    default:
      break;
  }
  if (recording_ && out.requires_grad()) {
    touch(a);
    touch(b);
    touch(out);
    auto ad = a.handle(), bd = b.handle(), od = out.handle();
    record([ad, bd, od, kind, n] {
      const double* dy = od->grad.data();
      const double* pa = ad->value.data();
      const double* pb = bd->value.data();
      double* da = ad->requires_grad ? grad_of(ad).data() : nullptr;
      double* db = bd->requires_grad ? grad_of(bd).data() : nullptr;
      switch (kind) {
        case EwKind::Add:
          for (std::int64_t i = 0; i < n; ++i) {
            if (da) da[i] += dy[i];
            if (db) db[i] += dy[i];
          }
          break;
        case EwKind::Sub:
          for (std::int64_t i = 0; i < n; ++i) {
            if (da) da[i] += dy[i];
            if (db) db[i] -= dy[i];
          }
          break;
        case EwKind::Mul:
          for (std::int64_t i = 0; i < n; ++i) {
            if (da) da[i] += pb[i] * dy[i];
            if (db) db[i] += pa[i] * dy[i];
          }
          break;
        case EwKind::Max:
          // ties route the gradient to the first operand
          for (std::int64_t i = 0; i < n; ++i) {
            if (pa[i] >= pb[i]) {
              if (da) da[i] += dy[i];
            } else if (db) {
              db[i] += dy[i];
            }
          }
          break;
        case EwKind::Min:
          for (std::int64_t i = 0; i < n; ++i) {
            if (pa[i] <= pb[i]) {
              if (da) da[i] += dy[i];
            } else if (db) {
              db[i] += dy[i];
            }
          }
          break;
        default:
          break;
      }
    });
  }
  return out;
}

Tensor Tape::concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1 || a.rank() > 2) {
    throw DimensionError("concat requires two vectors or two matrices, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const bool vec = a.rank() == 1;
  const int batch = vec ? 1 : a.shape()[0];
  if (!vec && b.shape()[0] != batch) {
    throw DimensionError("concat batch extents differ: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const int p = vec ? a.shape()[0] : a.shape()[1];
  const int q = vec ? b.shape()[0] : b.shape()[1];
  Shape out_shape = vec ? Shape{p + q} : Shape{batch, p + q};
  Tensor out = alloc(std::move(out_shape), a.requires_grad() || b.requires_grad());
  {
    const double* pa = a.value().data();
    const double* pb = b.value().data();
    double* po = out.value().data();
    for (int i = 0; i < batch; ++i) {
      std::memcpy(po + static_cast<std::size_t>(i) * (p + q),
                  pa + static_cast<std::size_t>(i) * p, sizeof(double) * p);
      std::memcpy(po + static_cast<std::size_t>(i) * (p + q) + p,
                  pb + static_cast<std::size_t>(i) * q, sizeof(double) * q);
    }
  }
  if (recording_ && out.requires_grad()) {
    touch(a);
    touch(b);
    touch(out);
    auto ad = a.handle(), bd = b.handle(), od = out.handle();
    record([ad, bd, od, batch, p, q] {
      const double* dy = od->grad.data();
      if (ad->requires_grad) {
        double* da = grad_of(ad).data();
        for (int i = 0; i < batch; ++i)
          for (int j = 0; j < p; ++j)
            da[static_cast<std::size_t>(i) * p + j] +=
                dy[static_cast<std::size_t>(i) * (p + q) + j];
      }
      if (bd->requires_grad) {
        double* db = grad_of(bd).data();
        for (int i = 0; i < batch; ++i)
          for (int j = 0; j < q; ++j)
            db[static_cast<std::size_t>(i) * q + j] +=
                dy[static_cast<std::size_t>(i) * (p + q) + p + j];
      }
    });
  }
  return out;
}

Tensor Tape::slice(const Tensor& a, int lo, int hi) {
  if (a.rank() < 1 || a.rank() > 2) {
    throw DimensionError("slice requires a vector or matrix, got " +
                         shape_str(a.shape()));
  }
  const bool vec = a.rank() == 1;
  const int batch = vec ? 1 : a.shape()[0];
  const int width = vec ? a.shape()[0] : a.shape()[1];
  if (lo < 0 || hi > width || lo > hi) {
    throw ArgumentError("slice range [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + ") out of bounds for width " +
                        std::to_string(width));
  }
  const int w = hi - lo;
  Shape out_shape = vec ? Shape{w} : Shape{batch, w};
  Tensor out = alloc(std::move(out_shape), a.requires_grad());
  {
    const double* pa = a.value().data();
    double* po = out.value().data();
    for (int i = 0; i < batch; ++i)
      std::memcpy(po + static_cast<std::size_t>(i) * w,
                  pa + static_cast<std::size_t>(i) * width + lo,
                  sizeof(double) * w);
  }
  if (recording_ && out.requires_grad()) {
    touch(a);
    touch(out);
    auto ad = a.handle(), od = out.handle();
    record([ad, od, batch, width, lo, w] {
      if (!ad->requires_grad) return;
      double* da = grad_of(ad).data();
      const double* dy = od->grad.data();
      for (int i = 0; i < batch; ++i)
        for (int j = 0; j < w; ++j)
          da[static_cast<std::size_t>(i) * width + lo + j] +=
              dy[static_cast<std::size_t>(i) * w + j];
    });
  }
  return out;
}

std::vector<Tensor> Tape::softmax_stack(const std::vector<Tensor>& logits) {
  if (logits.empty()) {
    throw ArgumentError("softmax_stack requires at least one tensor");
  }
  const std::size_t l = logits.size();
  const Shape& shape = logits[0].shape();
  bool any_grad = false;
  for (const Tensor& t : logits) {
    if (t.shape() != shape) {
      throw DimensionError("softmax_stack shape mismatch: " +
                           shape_str(t.shape()) + " vs " + shape_str(shape));
    }
    any_grad = any_grad || t.requires_grad();
  }
  const std::int64_t n = shape_size(shape);
  std::vector<Tensor> out;
  out.reserve(l);
  for (std::size_t j = 0; j < l; ++j) out.push_back(alloc(shape, any_grad));
  for (std::int64_t d = 0; d < n; ++d) {
    double m = logits[0].value()[d];
    for (std::size_t j = 1; j < l; ++j)
      m = std::fmax(m, logits[j].value()[d]);
    double z = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      const double e = std::exp(logits[j].value()[d] - m);
      out[j].value()[d] = e;
      z += e;
    }
    for (std::size_t j = 0; j < l; ++j) out[j].value()[d] /= z;
  }
  if (recording_ && any_grad) {
    std::vector<std::shared_ptr<TensorData>> in_h, out_h;
    for (const Tensor& t : logits) {
      touch(t);
      in_h.push_back(t.handle());
    }
    for (const Tensor& t : out) {
      touch(t);
      out_h.push_back(t.handle());
    }
    record([in_h, out_h, l, n] {
      // d logit_j = p_j * (g_j - sum_k p_k g_k), per element position
      for (std::int64_t d = 0; d < n; ++d) {
        double dot = 0.0;
        for (std::size_t k = 0; k < l; ++k)
          dot += out_h[k]->value[d] * out_h[k]->grad[d];
        for (std::size_t j = 0; j < l; ++j) {
          if (!in_h[j]->requires_grad) continue;
          grad_of(in_h[j]).data()[d] +=
              out_h[j]->value[d] * (out_h[j]->grad[d] - dot);
        }
      }
    });
  }
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  Tensor out = alloc({}, a.requires_grad());
  double acc = 0.0;
  for (double v : a.value()) acc += v;
  out.value()[0] = acc;
  if (recording_ && out.requires_grad()) {
    touch(a);
    touch(out);
    auto ad = a.handle(), od = out.handle();
    record([ad, od] {
      if (!ad->requires_grad) return;
      const double g = od->grad[0];
      for (double& v : grad_of(ad)) v += g;
    });
  }
  return out;
}

Tensor Tape::reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape size mismatch: " + shape_str(a.shape()) +
                         " to " + shape_str(shape));
  }
  Tensor out = alloc(std::move(shape), a.requires_grad());
  std::copy(a.value().begin(), a.value().end(), out.value().begin());
  if (recording_ && out.requires_grad()) {
    touch(a);
    touch(out);
    auto ad = a.handle(), od = out.handle();
    record([ad, od] {
      if (!ad->requires_grad) return;
      double* da = grad_of(ad).data();
      const double* dy = od->grad.data();
      for (std::size_t i = 0; i < ad->value.size(); ++i) da[i] += dy[i];
    });
  }
  return out;
}

Tensor Tape::embed(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) {
    throw DimensionError("embed table must be a matrix, got " +
                         shape_str(table.shape()));
  }
  const int vocab = table.shape()[0], dim = table.shape()[1];
  const int batch = static_cast<int>(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw ArgumentError("embed id " + std::to_string(id) +
                          " out of range for vocabulary " + std::to_string(vocab));
    }
  }
  Tensor out = alloc({batch, dim}, table.requires_grad());
  {
    const double* pt = table.value().data();
    double* po = out.value().data();
    for (int i = 0; i < batch; ++i)
      std::memcpy(po + static_cast<std::size_t>(i) * dim,
                  pt + static_cast<std::size_t>(ids[i]) * dim,
                  sizeof(double) * dim);
  }
  if (recording_ && out.requires_grad()) {
    touch(table);
    touch(out);
    auto td = table.handle(), od = out.handle();
    std::vector<int> ids_copy(ids.begin(), ids.end());
    record([td, od, ids_copy, dim] {
      if (!td->requires_grad) return;
      double* dt = grad_of(td).data();
      const double* dy = od->grad.data();
      for (std::size_t i = 0; i < ids_copy.size(); ++i) {
        double* row = dt + static_cast<std::size_t>(ids_copy[i]) * dim;
        const double* dyrow = dy + i * dim;
        for (int j = 0; j < dim; ++j) row[j] += dyrow[j];
      }
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!recording_) {
    throw ArgumentError("backward on a non-recording tape");
  }
  if (loss.size() != 1) {
    throw ArgumentError("backward requires a scalar loss, got " +
                        shape_str(loss.shape()));
  }
  for (auto& d : touched_) d->grad.assign(d->value.size(), 0.0);
  loss.node()->grad.assign(1, 1.0);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

}  // namespace mufuru

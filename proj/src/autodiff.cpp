#include "gridlight/autodiff.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gridlight::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_same(const std::string& op, Var a, Var b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

}  // namespace

// ---- Var / Tape ------------------------------------------------------------

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("Var: unbound handle");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

void Tape::check_owner(Var v) const {
  if (v.tape() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw std::invalid_argument("Tape: variable belongs to a different tape");
  }
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(const std::string& name, const Tensor& value) {
  Node n;
  n.value = value;
  n.requires_grad = true;
  n.param_name = name;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

std::map<std::string, Var> Tape::parameters(const ParamSet& params) {
  std::map<std::string, Var> out;
  for (const auto& [name, t] : params) out.emplace(name, parameter(name, t));
  return out;
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (Var v : inputs) {
    check_owner(v);
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(v.id())].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Gradients Tape::backward(Var loss) {
  check_owner(loss);
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  }
  const std::size_t root = static_cast<std::size_t>(loss.id());
  std::vector<Tensor> grads(root + 1);
  std::vector<char> live(root + 1, 0);
  grads[root] = Tensor(loss.value().shape(), 1.0);
  live[root] = 1;

  std::vector<Tensor*> slots;
  for (std::size_t i = root + 1; i-- > 0;) {
    if (!live[i]) continue;
    Node& node = nodes_[i];
    if (node.backward) {
      slots.assign(node.inputs.size(), nullptr);
      for (std::size_t j = 0; j < node.inputs.size(); ++j) {
        const auto in = static_cast<std::size_t>(node.inputs[j]);
        if (!nodes_[in].requires_grad) continue;
        if (!live[in]) {
          grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
          live[in] = 1;
        }
        slots[j] = &grads[in];
      }
      node.backward(*this, grads[i], slots);
    }
    if (node.param_name.empty()) {
      grads[i] = Tensor();
      live[i] = 0;
    }
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (node.param_name.empty()) continue;
    Tensor g = (i <= root && live[i]) ? std::move(grads[i]) : Tensor(node.value.shape(), 0.0);
    auto [it, inserted] = out.emplace(node.param_name, g);
    if (!inserted) {
      for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
    }
  }
  return out;
}

Var detach(Var x) { return x.tape()->constant(x.value()); }

// ---- elementwise -------------------------------------------------------------

Var add(Var a, Var b) {
  require_same("add", a, b);
  Tensor y(a.shape());
  const Tensor& x1 = a.value();
  const Tensor& x2 = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x1[i] + x2[i];
  return a.tape()->record(std::move(y), {a, b}, [](const Tape&, const Tensor& g, std::span<Tensor* const> gin) {
    for (Tensor* gi : gin) {
      if (!gi) continue;
      for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  Tensor y(a.shape());
  const Tensor& x1 = a.value();
  const Tensor& x2 = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x1[i] - x2[i];
  return a.tape()->record(std::move(y), {a, b}, [](const Tape&, const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    if (gin[1]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  Tensor y(a.shape());
  const Tensor& x1 = a.value();
  const Tensor& x2 = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x1[i] * x2[i];
  const int ia = a.id();
  const int ib = b.id();
  return a.tape()->record(std::move(y), {a, b}, [ia, ib](const Tape& t, const Tensor& g, std::span<Tensor* const> gin) {
    const Tensor& va = t.value(ia);
    const Tensor& vb = t.value(ib);
    if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * vb[i];
    if (gin[1]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * va[i];
  });
}

Var scale(Var a, double s) {
  Tensor y(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = s * x[i];
  return a.tape()->record(std::move(y), {a}, [s](const Tape&, const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += s * g[i];
  });
}

Var add_scalar(Var a, double s) {
  Tensor y(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + s;
  return a.tape()->record(std::move(y), {a}, [](const Tape&, const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  Tensor y(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  const int ia = a.id();
  return a.tape()->record(std::move(y), {a}, [ia](const Tape& t, const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    const Tensor& xv = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) (*gin[0])[i] += g[i];
    }
  });
}

Var exp(Var a) {
  Tensor y(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::exp(x[i]);
  Tape* tape = a.tape();
  const int out_id = static_cast<int>(tape->size());
  return tape->record(std::move(y), {a}, [out_id](const Tape& t, const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    const Tensor& yv = t.value(out_id);
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * yv[i];
  });
}

Var log(Var a) {
  Tensor y(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(x[i]);
  const int ia = a.id();
  return a.tape()->record(std::move(y), {a}, [ia](const Tape& t, const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    const Tensor& xv = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] / xv[i];
  });
}

Var square(Var a) {
  Tensor y(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * x[i];
  const int ia = a.id();
  return a.tape()->record(std::move(y), {a}, [ia](const Tape& t, const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    const Tensor& xv = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += 2.0 * g[i] * xv[i];
  });
}

Var clip(Var a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clip: lo > hi");
  Tensor y(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::clamp(x[i], lo, hi);
  const int ia = a.id();
  return a.tape()->record(std::move(y), {a}, [ia, lo, hi](const Tape& t, const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    const Tensor& xv = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > lo && xv[i] < hi) (*gin[0])[i] += g[i];
    }
  });
}

namespace {

Var select_elementwise(const char* op, Var a, Var b, bool take_min) {
  require_same(op, a, b);
  const Tensor& x1 = a.value();
  const Tensor& x2 = b.value();
  Tensor y(a.shape());
  std::vector<char> from_a(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    from_a[i] = take_min ? (x1[i] <= x2[i]) : (x1[i] >= x2[i]);
    y[i] = from_a[i] ? x1[i] : x2[i];
  }
  return a.tape()->record(std::move(y), {a, b},
                          [from_a = std::move(from_a)](const Tape&, const Tensor& g, std::span<Tensor* const> gin) {
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              Tensor* dst = from_a[i] ? gin[0] : gin[1];
                              if (dst) (*dst)[i] += g[i];
                            }
                          });
}

}  // namespace

Var minimum(Var a, Var b) { return select_elementwise("minimum", a, b, true); }
Var maximum(Var a, Var b) { return select_elementwise("maximum", a, b, false); }

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  return a.tape()->record(Tensor::scalar(s), {a}, [](const Tape&, const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    const double gv = g[0];
    for (double& v : gin[0]->data()) v += gv;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

// ---- shape -------------------------------------------------------------------

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return a.tape()->record(std::move(y), {a}, [](const Tape&, const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
  });
}

Var flatten(Var a, int start_dim) {
  const Shape& s = a.shape();
  if (start_dim < 0 || start_dim >= static_cast<int>(s.size())) {
    throw std::invalid_argument("flatten: start_dim out of range for " + shape_str(s));
  }
  Shape out(s.begin(), s.begin() + start_dim);
  int rest = 1;
  for (std::size_t i = static_cast<std::size_t>(start_dim); i < s.size(); ++i) rest *= s[i];
  out.push_back(rest);
  return reshape(a, out);
}

Var pick(Var a, std::span<const int> index) {
  const Tensor& x = a.value();
  if (x.rank() != 2 || static_cast<std::size_t>(x.dim(0)) != index.size()) {
    throw std::invalid_argument("pick: expected <M,K> with M indices, got " + shape_str(x.shape()));
  }
  const int k = x.dim(1);
  std::vector<int> idx(index.begin(), index.end());
  Tensor y({x.dim(0)});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= k) throw std::out_of_range("pick: index out of range");
    y[i] = x[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(idx[i])];
  }
  return a.tape()->record(std::move(y), {a}, [idx = std::move(idx), k](const Tape&, const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    for (std::size_t i = 0; i < idx.size(); ++i) (*gin[0])[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(idx[i])] += g[i];
  });
}

Var row_sum(Var a) {
  const Tensor& x = a.value();
  if (x.rank() != 2) throw std::invalid_argument("row_sum: expected rank 2, got " + shape_str(x.shape()));
  const int rows = x.dim(0);
  const int cols = x.dim(1);
  Tensor y({rows});
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += x[static_cast<std::size_t>(r * cols + c)];
    y[static_cast<std::size_t>(r)] = s;
  }
  return a.tape()->record(std::move(y), {a}, [cols](const Tape&, const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    for (std::size_t i = 0; i < gin[0]->size(); ++i) (*gin[0])[i] += g[i / static_cast<std::size_t>(cols)];
  });
}

Var column(Var a, int col) {
  const Tensor& x = a.value();
  if (x.rank() != 2 || col < 0 || col >= x.dim(1)) throw std::invalid_argument("column: bad column for " + shape_str(x.shape()));
  const int rows = x.dim(0);
  const int cols = x.dim(1);
  Tensor y({rows});
  for (int r = 0; r < rows; ++r) y[static_cast<std::size_t>(r)] = x[static_cast<std::size_t>(r * cols + col)];
  return a.tape()->record(std::move(y), {a}, [cols, col](const Tape&, const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    for (std::size_t r = 0; r < g.size(); ++r) (*gin[0])[r * static_cast<std::size_t>(cols) + static_cast<std::size_t>(col)] += g[r];
  });
}

// ---- layers --------------------------------------------------------------------

namespace {

struct ConvGeometry {
  int batch, c_in, h, w, c_out, k, pad;
  bool batched;
  int patch() const { return c_in * k * k; }
  int plane() const { return h * w; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& kern) {
  if (x.rank() != 3 && x.rank() != 4) throw std::invalid_argument("conv2d: input must be <C,H,W> or <B,C,H,W>, got " + shape_str(x.shape()));
  if (kern.rank() != 4) throw std::invalid_argument("conv2d: kernels must be <C_out,C_in,k,k>, got " + shape_str(kern.shape()));
  ConvGeometry g{};
  g.batched = x.rank() == 4;
  const int off = g.batched ? 1 : 0;
  g.batch = g.batched ? x.dim(0) : 1;
  g.c_in = x.dim(off);
  g.h = x.dim(off + 1);
  g.w = x.dim(off + 2);
  g.c_out = kern.dim(0);
  g.k = kern.dim(2);
  if (kern.dim(1) != g.c_in || kern.dim(3) != g.k || g.k % 2 == 0) shape_error("conv2d", x.shape(), kern.shape());
  g.pad = g.k / 2;
  return g;
}

void im2col(const ConvGeometry& g, const double* x, double* col) {
  const int hw = g.plane();
  for (int c = 0; c < g.c_in; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = col + static_cast<std::ptrdiff_t>(((c * g.k + ky) * g.k + kx) * hw);
        const double* src = x + static_cast<std::ptrdiff_t>(c * hw);
        for (int y = 0; y < g.h; ++y) {
          const int sy = y + ky - g.pad;
          double* dst = row + y * g.w;
          if (sy < 0 || sy >= g.h) {
            std::fill(dst, dst + g.w, 0.0);
            continue;
          }
          for (int xx = 0; xx < g.w; ++xx) {
            const int sx = xx + kx - g.pad;
            dst[xx] = (sx < 0 || sx >= g.w) ? 0.0 : src[sy * g.w + sx];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* dx) {
  const int hw = g.plane();
  for (int c = 0; c < g.c_in; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row = col + static_cast<std::ptrdiff_t>(((c * g.k + ky) * g.k + kx) * hw);
        double* dst = dx + static_cast<std::ptrdiff_t>(c * hw);
        for (int y = 0; y < g.h; ++y) {
          const int sy = y + ky - g.pad;
          if (sy < 0 || sy >= g.h) continue;
          for (int xx = 0; xx < g.w; ++xx) {
            const int sx = xx + kx - g.pad;
            if (sx >= 0 && sx < g.w) dst[sy * g.w + sx] += row[y * g.w + xx];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var input, Var kernels) {
  const Tensor& x = input.value();
  const Tensor& kern = kernels.value();
  const ConvGeometry g = conv_geometry(x, kern);
  const int hw = g.plane();
  const bool direct = g.k == 1;

  Tensor y(g.batched ? Shape{g.batch, g.c_out, g.h, g.w} : Shape{g.c_out, g.h, g.w});
  ConstMatMap km(kern.ptr(), g.c_out, g.patch());
  std::vector<double> col(direct ? 0 : static_cast<std::size_t>(g.patch() * hw));
  for (int b = 0; b < g.batch; ++b) {
    const double* xb = x.ptr() + static_cast<std::ptrdiff_t>(b) * g.c_in * hw;
    if (!direct) im2col(g, xb, col.data());
    ConstMatMap cm(direct ? xb : col.data(), g.patch(), hw);
    MatMap ym(y.ptr() + static_cast<std::ptrdiff_t>(b) * g.c_out * hw, g.c_out, hw);
    ym.noalias() = km * cm;
  }

  const int ix = input.id();
  const int ik = kernels.id();
  return input.tape()->record(std::move(y), {input, kernels}, [g, ix, ik](const Tape& t, const Tensor& gy, std::span<Tensor* const> gin) {
    const Tensor& xv = t.value(ix);
    const Tensor& kv = t.value(ik);
    const int hw = g.plane();
    const bool direct = g.k == 1;
    ConstMatMap km(kv.ptr(), g.c_out, g.patch());
    std::vector<double> col(direct ? 0 : static_cast<std::size_t>(g.patch() * hw));
    std::vector<double> dcol(gin[0] && !direct ? static_cast<std::size_t>(g.patch() * hw) : 0);
    for (int b = 0; b < g.batch; ++b) {
      const double* xb = xv.ptr() + static_cast<std::ptrdiff_t>(b) * g.c_in * hw;
      ConstMatMap gm(gy.ptr() + static_cast<std::ptrdiff_t>(b) * g.c_out * hw, g.c_out, hw);
      if (gin[1]) {
        if (!direct) im2col(g, xb, col.data());
        ConstMatMap cm(direct ? xb : col.data(), g.patch(), hw);
        MatMap dk(gin[1]->ptr(), g.c_out, g.patch());
        dk.noalias() += gm * cm.transpose();
      }
      if (gin[0]) {
        double* dxb = gin[0]->ptr() + static_cast<std::ptrdiff_t>(b) * g.c_in * hw;
        if (direct) {
          MatMap dx(dxb, g.c_in, hw);
          dx.noalias() += km.transpose() * gm;
        } else {
          MatMap dc(dcol.data(), g.patch(), hw);
          dc.noalias() = km.transpose() * gm;
          col2im_add(g, dcol.data(), dxb);
        }
      }
    }
  });
}

Var channel_norm(Var input, Var gamma, Var beta, double eps) {
  const Tensor& x = input.value();
  if (x.rank() != 3 && x.rank() != 4) throw std::invalid_argument("channel_norm: expected <C,H,W> or <B,C,H,W>, got " + shape_str(x.shape()));
  const int off = x.rank() == 4 ? 1 : 0;
  const int batch = off ? x.dim(0) : 1;
  const int channels = x.dim(off);
  const int hw = x.dim(off + 1) * x.dim(off + 2);
  if (gamma.shape() != Shape{channels}) shape_error("channel_norm gamma", gamma.shape(), Shape{channels});
  if (beta.shape() != Shape{channels}) shape_error("channel_norm beta", beta.shape(), Shape{channels});

  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor y(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(static_cast<std::size_t>(batch * channels));
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = (static_cast<std::size_t>(b) * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)) *
                               static_cast<std::size_t>(hw);
      double mu = 0.0;
      for (int i = 0; i < hw; ++i) mu += x[base + static_cast<std::size_t>(i)];
      mu /= hw;
      double var = 0.0;
      for (int i = 0; i < hw; ++i) {
        const double d = x[base + static_cast<std::size_t>(i)] - mu;
        var += d * d;
      }
      var /= hw;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(b * channels + c)] = is;
      for (int i = 0; i < hw; ++i) {
        const std::size_t j = base + static_cast<std::size_t>(i);
        xhat[j] = (x[j] - mu) * is;
        y[j] = gv[static_cast<std::size_t>(c)] * xhat[j] + bv[static_cast<std::size_t>(c)];
      }
    }
  }

  const int ig = gamma.id();
  return input.tape()->record(
      std::move(y), {input, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels, hw, ig](const Tape& t, const Tensor& g,
                                                                                      std::span<Tensor* const> gin) {
        const Tensor& gv = t.value(ig);
        for (int b = 0; b < batch; ++b) {
          for (int c = 0; c < channels; ++c) {
            const std::size_t base =
                (static_cast<std::size_t>(b) * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)) * static_cast<std::size_t>(hw);
            double sum_g = 0.0;
            double sum_gx = 0.0;
            for (int i = 0; i < hw; ++i) {
              const std::size_t j = base + static_cast<std::size_t>(i);
              sum_g += g[j];
              sum_gx += g[j] * xhat[j];
            }
            if (gin[1]) (*gin[1])[static_cast<std::size_t>(c)] += sum_gx;
            if (gin[2]) (*gin[2])[static_cast<std::size_t>(c)] += sum_g;
            if (gin[0]) {
              const double k = gv[static_cast<std::size_t>(c)] * inv_std[static_cast<std::size_t>(b * channels + c)];
              const double mg = sum_g / hw;
              const double mgx = sum_gx / hw;
              for (int i = 0; i < hw; ++i) {
                const std::size_t j = base + static_cast<std::size_t>(i);
                (*gin[0])[j] += k * (g[j] - mg - xhat[j] * mgx);
              }
            }
          }
        }
      });
}

Var dense(Var input, Var weights, Var bias) {
  const Tensor& x = input.value();
  const Tensor& wt = weights.value();
  const Tensor& bt = bias.value();
  if (x.rank() != 1 && x.rank() != 2) throw std::invalid_argument("dense: input must be <n> or <B,n>, got " + shape_str(x.shape()));
  if (wt.rank() != 2) throw std::invalid_argument("dense: weights must be <m,n>, got " + shape_str(wt.shape()));
  const bool batched = x.rank() == 2;
  const int batch = batched ? x.dim(0) : 1;
  const int n = x.dim(-1);
  const int m = wt.dim(0);
  if (wt.dim(1) != n) shape_error("dense", x.shape(), wt.shape());
  if (bt.shape() != Shape{m}) shape_error("dense bias", bt.shape(), Shape{m});

  Tensor y(batched ? Shape{batch, m} : Shape{m});
  ConstMatMap xm(x.ptr(), batch, n);
  ConstMatMap wm(wt.ptr(), m, n);
  MatMap ym(y.ptr(), batch, m);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += ConstVecMap(bt.ptr(), m).transpose();

  const int ix = input.id();
  const int iw = weights.id();
  return input.tape()->record(std::move(y), {input, weights, bias},
                              [ix, iw, batch, n, m](const Tape& t, const Tensor& g, std::span<Tensor* const> gin) {
                                ConstMatMap gm(g.ptr(), batch, m);
                                if (gin[0]) {
                                  ConstMatMap wm(t.value(iw).ptr(), m, n);
                                  MatMap dx(gin[0]->ptr(), batch, n);
                                  dx.noalias() += gm * wm;
                                }
                                if (gin[1]) {
                                  ConstMatMap xm(t.value(ix).ptr(), batch, n);
                                  MatMap dw(gin[1]->ptr(), m, n);
                                  dw.noalias() += gm.transpose() * xm;
                                }
                                if (gin[2]) {
                                  VecMap db(gin[2]->ptr(), m);
                                  db += gm.colwise().sum().transpose();
                                }
                              });
}

namespace {

std::pair<int, int> rows_cols(const Tensor& x, const char* op) {
  if (x.rank() < 1) throw std::invalid_argument(std::string(op) + ": needs rank >= 1");
  const int cols = x.dim(-1);
  const int rows = cols == 0 ? 0 : static_cast<int>(x.size() / static_cast<std::size_t>(cols));
  return {rows, cols};
}

}  // namespace

Var softmax(Var a) {
  const Tensor& x = a.value();
  const auto [rows, cols] = rows_cols(x, "softmax");
  Tensor y(x.shape());
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * static_cast<std::size_t>(cols);
    double mx = x[base];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, x[base + static_cast<std::size_t>(c)]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double e = std::exp(x[base + static_cast<std::size_t>(c)] - mx);
      y[base + static_cast<std::size_t>(c)] = e;
      z += e;
    }
    for (int c = 0; c < cols; ++c) y[base + static_cast<std::size_t>(c)] /= z;
  }
  Tape* tape = a.tape();
  const int out_id = static_cast<int>(tape->size());
  return tape->record(std::move(y), {a}, [out_id, rows, cols](const Tape& t, const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    const Tensor& yv = t.value(out_id);
    for (int r = 0; r < rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * static_cast<std::size_t>(cols);
      double dot = 0.0;
      for (int c = 0; c < cols; ++c) dot += g[base + static_cast<std::size_t>(c)] * yv[base + static_cast<std::size_t>(c)];
      for (int c = 0; c < cols; ++c) {
        const std::size_t j = base + static_cast<std::size_t>(c);
        (*gin[0])[j] += yv[j] * (g[j] - dot);
      }
    }
  });
}

Var log_softmax(Var a) {
  const Tensor& x = a.value();
  const auto [rows, cols] = rows_cols(x, "log_softmax");
  Tensor y(x.shape());
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * static_cast<std::size_t>(cols);
    double mx = x[base];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, x[base + static_cast<std::size_t>(c)]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) z += std::exp(x[base + static_cast<std::size_t>(c)] - mx);
    const double lz = mx + std::log(z);
    for (int c = 0; c < cols; ++c) y[base + static_cast<std::size_t>(c)] = x[base + static_cast<std::size_t>(c)] - lz;
  }
  Tape* tape = a.tape();
  const int out_id = static_cast<int>(tape->size());
  return tape->record(std::move(y), {a}, [out_id, rows, cols](const Tape& t, const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    const Tensor& yv = t.value(out_id);
    for (int r = 0; r < rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * static_cast<std::size_t>(cols);
      double gs = 0.0;
      for (int c = 0; c < cols; ++c) gs += g[base + static_cast<std::size_t>(c)];
      for (int c = 0; c < cols; ++c) {
        const std::size_t j = base + static_cast<std::size_t>(c);
        (*gin[0])[j] += g[j] - std::exp(yv[j]) * gs;
      }
    }
  });
}

}  // namespace gridlight::ad

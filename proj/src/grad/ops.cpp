#include "rxl/grad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rxl::grad {

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const std::string& what) {
  throw ShapeError(std::string(op) + ": shape " + a.str() + " " + what);
}

Tape& tape_of(Var a, const char* op) {
  if (!a.valid()) throw GradError(std::string(op) + ": unbound input");
  return *a.tape();
}

void same_tape(Var a, Var b, const char* op) {
  if (a.tape() != b.tape()) throw GradError(std::string(op) + ": inputs on different tapes");
}

template <typename F>
Var unary(Var a, const char* op, F&& fwd, Tape::Backward bwd) {
  Tape& t = tape_of(a, op);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  const double* xs = x.data();
  double* ys = y.data();
  for (std::size_t i = 0, n = x.size(); i < n; ++i) ys[i] = fwd(xs[i]);
  return t.record(std::move(y), {a}, std::move(bwd), op);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, "matmul");
  same_tape(a, b, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape().rank() != 2) shape_fail("matmul", A.shape(), B.shape());
  const std::size_t m = A.shape()[0], n = A.shape()[1];
  const std::uint32_t ia = a.id(), ib = b.id();

  if (B.shape().rank() == 1) {
    if (B.shape()[0] != n) shape_fail("matmul", A.shape(), B.shape());
    Tensor y(Shape{m});
    const double* ap = A.data();
    const double* xp = B.data();
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      const double* row = ap + i * n;
      for (std::size_t j = 0; j < n; ++j) s += row[j] * xp[j];
      y[i] = s;
    }
    return t.record(std::move(y), {a, b},
                    [ia, ib, m, n](Tape& tp, const Tensor& g) {
                      const double* gp = g.data();
                      if (tp.needs_grad(ia)) {
                        const double* xp = tp.value(ib).data();
                        double* ga = tp.grad_buffer(ia).data();
                        for (std::size_t i = 0; i < m; ++i) {
                          const double gi = gp[i];
                          double* row = ga + i * n;
                          for (std::size_t j = 0; j < n; ++j) row[j] += gi * xp[j];
                        }
                      }
                      if (tp.needs_grad(ib)) {
                        const double* ap = tp.value(ia).data();
                        double* gx = tp.grad_buffer(ib).data();
                        for (std::size_t i = 0; i < m; ++i) {
                          const double gi = gp[i];
                          const double* row = ap + i * n;
                          for (std::size_t j = 0; j < n; ++j) gx[j] += gi * row[j];
                        }
                      }
                    },
                    "matmul");
  }

  if (B.shape().rank() != 2 || B.shape()[0] != n) shape_fail("matmul", A.shape(), B.shape());
  const std::size_t p = B.shape()[1];
  Tensor y(Shape{m, p});
  {
    const double* ap = A.data();
    const double* bp = B.data();
    double* yp = y.data();
    for (std::size_t i = 0; i < m; ++i) {
      double* yrow = yp + i * p;
      for (std::size_t k = 0; k < n; ++k) {
        const double aik = ap[i * n + k];
        const double* brow = bp + k * p;
        for (std::size_t j = 0; j < p; ++j) yrow[j] += aik * brow[j];
      }
    }
  }
  return t.record(std::move(y), {a, b},
                  [ia, ib, m, n, p](Tape& tp, const Tensor& g) {
                    const double* gp = g.data();
                    if (tp.needs_grad(ia)) {
                      // dA = G B^T
                      const double* bp = tp.value(ib).data();
                      double* ga = tp.grad_buffer(ia).data();
                      for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = gp + i * p;
                        for (std::size_t k = 0; k < n; ++k) {
                          const double* brow = bp + k * p;
                          double s = 0.0;
                          for (std::size_t j = 0; j < p; ++j) s += grow[j] * brow[j];
                          ga[i * n + k] += s;
                        }
                      }
                    }
                    if (tp.needs_grad(ib)) {
                      // dB = A^T G
                      const double* ap = tp.value(ia).data();
                      double* gb = tp.grad_buffer(ib).data();
                      for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = gp + i * p;
                        for (std::size_t k = 0; k < n; ++k) {
                          const double aik = ap[i * n + k];
                          double* gbrow = gb + k * p;
                          for (std::size_t j = 0; j < p; ++j) gbrow[j] += aik * grow[j];
                        }
                      }
                    }
                  },
                  "matmul");
}

Var transpose(Var a) {
  Tape& t = tape_of(a, "transpose");
  const Tensor& A = a.value();
  if (A.shape().rank() != 2) shape_fail("transpose", A.shape(), "is not a matrix");
  const std::size_t m = A.shape()[0], n = A.shape()[1];
  Tensor y(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y.at(j, i) = A.at(i, j);
  const std::uint32_t ia = a.id();
  return t.record(std::move(y), {a},
                  [ia, m, n](Tape& tp, const Tensor& g) {
                    Tensor& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
                  },
                  "transpose");
}

namespace {

template <typename F>
Var binary_same(Var a, Var b, const char* op, F&& fwd, double da_sign, double db_sign,
                bool product) {
  Tape& t = tape_of(a, op);
  same_tape(a, b, op);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) shape_fail(op, A.shape(), B.shape());
  Tensor y(A.shape());
  for (std::size_t i = 0, n = A.size(); i < n; ++i) y[i] = fwd(A[i], B[i]);
  const std::uint32_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), {a, b},
                  [ia, ib, da_sign, db_sign, product](Tape& tp, const Tensor& g) {
                    const std::size_t n = g.size();
                    if (product) {
                      // Read values before allocating buffers; both are stable in the deque.
                      const Tensor& av = tp.value(ia);
                      const Tensor& bv = tp.value(ib);
                      if (tp.needs_grad(ia)) {
                        double* ga = tp.grad_buffer(ia).data();
                        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
                      }
                      if (tp.needs_grad(ib)) {
                        double* gb = tp.grad_buffer(ib).data();
                        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
                      }
                      return;
                    }
                    if (tp.needs_grad(ia)) {
                      double* ga = tp.grad_buffer(ia).data();
                      for (std::size_t i = 0; i < n; ++i) ga[i] += da_sign * g[i];
                    }
                    if (tp.needs_grad(ib)) {
                      double* gb = tp.grad_buffer(ib).data();
                      for (std::size_t i = 0; i < n; ++i) gb[i] += db_sign * g[i];
                    }
                  },
                  op);
}

}  // namespace

Var add(Var a, Var b) {
  return binary_same(a, b, "add", [](double x, double y) { return x + y; }, 1.0, 1.0, false);
}

Var sub(Var a, Var b) {
  return binary_same(a, b, "sub", [](double x, double y) { return x - y; }, 1.0, -1.0, false);
}

Var mul(Var a, Var b) {
  return binary_same(a, b, "mul", [](double x, double y) { return x * y; }, 0.0, 0.0, true);
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  const std::uint32_t ia = a.id();
  return unary(a, "scale", [factor](double x) { return factor * x; },
               [ia, factor](Tape& tp, const Tensor& g) {
                 double* ga = tp.grad_buffer(ia).data();
                 for (std::size_t i = 0, n = g.size(); i < n; ++i) ga[i] += factor * g[i];
               });
}

Var add_constant(Var a, double c) {
  const std::uint32_t ia = a.id();
  return unary(a, "add_constant", [c](double x) { return x + c; },
               [ia](Tape& tp, const Tensor& g) {
                 double* ga = tp.grad_buffer(ia).data();
                 for (std::size_t i = 0, n = g.size(); i < n; ++i) ga[i] += g[i];
               });
}

Var mul_scalar(Var a, Var s) {
  Tape& t = tape_of(a, "mul_scalar");
  same_tape(a, s, "mul_scalar");
  const Tensor& A = a.value();
  const Tensor& S = s.value();
  if (S.size() != 1) shape_fail("mul_scalar", A.shape(), S.shape());
  const double sv = S[0];
  Tensor y(A.shape());
  for (std::size_t i = 0, n = A.size(); i < n; ++i) y[i] = A[i] * sv;
  const std::uint32_t ia = a.id(), is = s.id();
  return t.record(std::move(y), {a, s},
                  [ia, is](Tape& tp, const Tensor& g) {
                    const Tensor& av = tp.value(ia);
                    const double sv = tp.value(is)[0];
                    if (tp.needs_grad(ia)) {
                      double* ga = tp.grad_buffer(ia).data();
                      for (std::size_t i = 0, n = g.size(); i < n; ++i) ga[i] += g[i] * sv;
                    }
                    if (tp.needs_grad(is)) {
                      double acc = 0.0;
                      for (std::size_t i = 0, n = g.size(); i < n; ++i) acc += g[i] * av[i];
                      tp.grad_buffer(is)[0] += acc;
                    }
                  },
                  "mul_scalar");
}

Var add_n(const std::vector<Var>& terms) {
  if (terms.empty()) throw GradError("add_n: no terms");
  Tape& t = tape_of(terms[0], "add_n");
  const Shape& sh = terms[0].shape();
  Tensor y(sh);
  std::vector<std::uint32_t> ids;
  ids.reserve(terms.size());
  for (Var v : terms) {
    if (v.tape() != &t) throw GradError("add_n: inputs on different tapes");
    if (v.shape() != sh) shape_fail("add_n", sh, v.shape());
    const Tensor& x = v.value();
    for (std::size_t i = 0, n = x.size(); i < n; ++i) y[i] += x[i];
    ids.push_back(v.id());
  }
  return t.record(std::move(y), terms,
                  [ids = std::move(ids)](Tape& tp, const Tensor& g) {
                    for (std::uint32_t id : ids) {
                      if (!tp.needs_grad(id)) continue;
                      double* gx = tp.grad_buffer(id).data();
                      for (std::size_t i = 0, n = g.size(); i < n; ++i) gx[i] += g[i];
                    }
                  },
                  "add_n");
}

Var add_colwise(Var m, Var v) {
  Tape& t = tape_of(m, "add_colwise");
  same_tape(m, v, "add_colwise");
  const Tensor& M = m.value();
  const Tensor& V = v.value();
  if (M.shape().rank() != 2 || V.shape().rank() != 1 || V.shape()[0] != M.shape()[0]) {
    shape_fail("add_colwise", M.shape(), V.shape());
  }
  const std::size_t rows = M.shape()[0], cols = M.shape()[1];
  Tensor y(M.shape());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) y.at(i, j) = M.at(i, j) + V[i];
  const std::uint32_t im = m.id(), iv = v.id();
  return t.record(std::move(y), {m, v},
                  [im, iv, rows, cols](Tape& tp, const Tensor& g) {
                    if (tp.needs_grad(im)) {
                      double* gm = tp.grad_buffer(im).data();
                      for (std::size_t i = 0, n = g.size(); i < n; ++i) gm[i] += g[i];
                    }
                    if (tp.needs_grad(iv)) {
                      double* gv = tp.grad_buffer(iv).data();
                      for (std::size_t i = 0; i < rows; ++i) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) s += g.at(i, j);
                        gv[i] += s;
                      }
                    }
                  },
                  "add_colwise");
}

Var add_rowwise(Var m, Var v) {
  Tape& t = tape_of(m, "add_rowwise");
  same_tape(m, v, "add_rowwise");
  const Tensor& M = m.value();
  const Tensor& V = v.value();
  if (M.shape().rank() != 2 || V.shape().rank() != 1 || V.shape()[0] != M.shape()[1]) {
    shape_fail("add_rowwise", M.shape(), V.shape());
  }
  const std::size_t rows = M.shape()[0], cols = M.shape()[1];
  Tensor y(M.shape());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) y.at(i, j) = M.at(i, j) + V[j];
  const std::uint32_t im = m.id(), iv = v.id();
  return t.record(std::move(y), {m, v},
                  [im, iv, rows, cols](Tape& tp, const Tensor& g) {
                    if (tp.needs_grad(im)) {
                      double* gm = tp.grad_buffer(im).data();
                      for (std::size_t i = 0, n = g.size(); i < n; ++i) gm[i] += g[i];
                    }
                    if (tp.needs_grad(iv)) {
                      double* gv = tp.grad_buffer(iv).data();
                      for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j) gv[j] += g.at(i, j);
                    }
                  },
                  "add_rowwise");
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a, "sigmoid");
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0, n = x.size(); i < n; ++i) {
    const double v = x[i];
    // Branch keeps exp() from overflowing for large |v|.
    y[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  const std::uint32_t ia = a.id();
  const std::uint32_t iy = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(y), {a},
                  [ia, iy](Tape& tp, const Tensor& g) {
                    const Tensor& yv = tp.value(iy);
                    double* ga = tp.grad_buffer(ia).data();
                    for (std::size_t i = 0, n = g.size(); i < n; ++i)
                      ga[i] += g[i] * yv[i] * (1.0 - yv[i]);
                  },
                  "sigmoid");
}

Var tanh(Var a) {
  Tape& t = tape_of(a, "tanh");
  const std::uint32_t ia = a.id();
  const std::uint32_t iy = static_cast<std::uint32_t>(t.size());
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [ia, iy](Tape& tp, const Tensor& g) {
                 const Tensor& yv = tp.value(iy);
                 double* ga = tp.grad_buffer(ia).data();
                 for (std::size_t i = 0, n = g.size(); i < n; ++i)
                   ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
               });
}

Var exp(Var a) {
  Tape& t = tape_of(a, "exp");
  const std::uint32_t ia = a.id();
  const std::uint32_t iy = static_cast<std::uint32_t>(t.size());
  return unary(a, "exp", [](double x) { return std::exp(x); },
               [ia, iy](Tape& tp, const Tensor& g) {
                 const Tensor& yv = tp.value(iy);
                 double* ga = tp.grad_buffer(ia).data();
                 for (std::size_t i = 0, n = g.size(); i < n; ++i) ga[i] += g[i] * yv[i];
               });
}

Var log(Var a) {
  const std::uint32_t ia = a.id();
  return unary(a, "log", [](double x) { return std::log(x); },
               [ia](Tape& tp, const Tensor& g) {
                 const Tensor& xv = tp.value(ia);
                 double* ga = tp.grad_buffer(ia).data();
                 for (std::size_t i = 0, n = g.size(); i < n; ++i) ga[i] += g[i] / xv[i];
               });
}

Var relu(Var a) {
  const std::uint32_t ia = a.id();
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [ia](Tape& tp, const Tensor& g) {
                 const Tensor& xv = tp.value(ia);
                 double* ga = tp.grad_buffer(ia).data();
                 for (std::size_t i = 0, n = g.size(); i < n; ++i)
                   if (xv[i] > 0.0) ga[i] += g[i];
               });
}

Var softmax(Var a) {
  Tape& t = tape_of(a, "softmax");
  const Tensor& x = a.value();
  const std::size_t width = x.shape().last();
  const std::size_t rows = x.size() / width;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * width;
    double* yr = y.data() + r * width;
    const double mx = *std::max_element(xr, xr + width);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < width; ++j) yr[j] /= z;
  }
  const std::uint32_t ia = a.id();
  const std::uint32_t iy = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(y), {a},
                  [ia, iy, rows, width](Tape& tp, const Tensor& g) {
                    const Tensor& yv = tp.value(iy);
                    double* ga = tp.grad_buffer(ia).data();
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double* yr = yv.data() + r * width;
                      const double* gr = g.data() + r * width;
                      double dotp = 0.0;
                      for (std::size_t j = 0; j < width; ++j) dotp += gr[j] * yr[j];
                      double* gar = ga + r * width;
                      for (std::size_t j = 0; j < width; ++j) gar[j] += yr[j] * (gr[j] - dotp);
                    }
                  },
                  "softmax");
}

Var log_softmax(Var a) {
  Tape& t = tape_of(a, "log_softmax");
  const Tensor& x = a.value();
  const std::size_t width = x.shape().last();
  const std::size_t rows = x.size() / width;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * width;
    double* yr = y.data() + r * width;
    const double mx = *std::max_element(xr, xr + width);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += std::exp(xr[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < width; ++j) yr[j] = xr[j] - lse;
  }
  const std::uint32_t ia = a.id();
  const std::uint32_t iy = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(y), {a},
                  [ia, iy, rows, width](Tape& tp, const Tensor& g) {
                    const Tensor& yv = tp.value(iy);
                    double* ga = tp.grad_buffer(ia).data();
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double* yr = yv.data() + r * width;
                      const double* gr = g.data() + r * width;
                      double gs = 0.0;
                      for (std::size_t j = 0; j < width; ++j) gs += gr[j];
                      double* gar = ga + r * width;
                      for (std::size_t j = 0; j < width; ++j)
                        gar[j] += gr[j] - std::exp(yr[j]) * gs;
                    }
                  },
                  "log_softmax");
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw GradError("concat: no inputs");
  Tape& t = tape_of(parts[0], "concat");
  std::size_t total = 0;
  for (Var v : parts) {
    if (v.tape() != &t) throw GradError("concat: inputs on different tapes");
    if (v.shape().rank() != 1) shape_fail("concat", parts[0].shape(), v.shape());
    total += v.value().size();
  }
  Tensor y(Shape{total});
  std::vector<std::pair<std::uint32_t, std::size_t>> spans;
  spans.reserve(parts.size());
  std::size_t off = 0;
  for (Var v : parts) {
    const Tensor& x = v.value();
    std::copy(x.data(), x.data() + x.size(), y.data() + off);
    spans.emplace_back(v.id(), off);
    off += x.size();
  }
  return t.record(std::move(y), parts,
                  [spans = std::move(spans)](Tape& tp, const Tensor& g) {
                    for (auto [id, o] : spans) {
                      if (!tp.needs_grad(id)) continue;
                      Tensor& gx = tp.grad_buffer(id);
                      for (std::size_t i = 0, n = gx.size(); i < n; ++i) gx[i] += g[o + i];
                    }
                  },
                  "concat");
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw GradError("concat_cols: no inputs");
  Tape& t = tape_of(parts[0], "concat_cols");
  const std::size_t rows = parts[0].shape()[0];
  std::size_t total = 0;
  for (Var v : parts) {
    if (v.tape() != &t) throw GradError("concat_cols: inputs on different tapes");
    const Shape& s = v.shape();
    if (s.rank() > 2 || s[0] != rows) shape_fail("concat_cols", parts[0].shape(), s);
    total += s.rank() == 2 ? s[1] : 1;
  }
  Tensor y(Shape{rows, total});
  struct Piece {
    std::uint32_t id;
    std::size_t col;
    std::size_t width;
  };
  std::vector<Piece> pieces;
  pieces.reserve(parts.size());
  std::size_t col = 0;
  for (Var v : parts) {
    const Tensor& x = v.value();
    const std::size_t w = x.shape().rank() == 2 ? x.shape()[1] : 1;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < w; ++j) y.at(i, col + j) = x[i * w + j];
    pieces.push_back({v.id(), col, w});
    col += w;
  }
  return t.record(std::move(y), parts,
                  [pieces = std::move(pieces), rows, total](Tape& tp, const Tensor& g) {
                    for (const Piece& p : pieces) {
                      if (!tp.needs_grad(p.id)) continue;
                      double* gx = tp.grad_buffer(p.id).data();
                      for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < p.width; ++j)
                          gx[i * p.width + j] += g[i * total + p.col + j];
                    }
                  },
                  "concat_cols");
}

Var slice(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a, "slice");
  const Tensor& x = a.value();
  if (x.shape().rank() != 1 || begin >= end || end > x.size()) {
    shape_fail("slice", x.shape(),
               "cannot be sliced to [" + std::to_string(begin) + "," + std::to_string(end) + ")");
  }
  Tensor y(Shape{end - begin});
  std::copy(x.data() + begin, x.data() + end, y.data());
  const std::uint32_t ia = a.id();
  return t.record(std::move(y), {a},
                  [ia, begin](Tape& tp, const Tensor& g) {
                    double* ga = tp.grad_buffer(ia).data();
                    for (std::size_t i = 0, n = g.size(); i < n; ++i) ga[begin + i] += g[i];
                  },
                  "slice");
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a, "slice_cols");
  const Tensor& x = a.value();
  if (x.shape().rank() != 2 || begin >= end || end > x.shape()[1]) {
    shape_fail("slice_cols", x.shape(),
               "has no columns [" + std::to_string(begin) + "," + std::to_string(end) + ")");
  }
  const std::size_t rows = x.shape()[0], cols = x.shape()[1], w = end - begin;
  Tensor y(Shape{rows, w});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < w; ++j) y.at(i, j) = x.at(i, begin + j);
  const std::uint32_t ia = a.id();
  return t.record(std::move(y), {a},
                  [ia, begin, rows, cols, w](Tape& tp, const Tensor& g) {
                    double* ga = tp.grad_buffer(ia).data();
                    for (std::size_t i = 0; i < rows; ++i)
                      for (std::size_t j = 0; j < w; ++j) ga[i * cols + begin + j] += g[i * w + j];
                  },
                  "slice_cols");
}

Var pick(Var a, std::size_t i) {
  Tape& t = tape_of(a, "pick");
  const Tensor& x = a.value();
  if (x.shape().rank() != 1 || i >= x.size()) {
    shape_fail("pick", x.shape(), "has no element " + std::to_string(i));
  }
  const std::uint32_t ia = a.id();
  return t.record(Tensor::scalar(x[i]), {a},
                  [ia, i](Tape& tp, const Tensor& g) { tp.grad_buffer(ia)[i] += g[0]; }, "pick");
}

Var lookup(Var table, std::size_t index) {
  Tape& t = tape_of(table, "lookup");
  const Tensor& x = table.value();
  if (x.shape().rank() != 2 || index >= x.shape()[0]) {
    shape_fail("lookup", x.shape(), "has no row " + std::to_string(index));
  }
  const std::size_t e = x.shape()[1];
  Tensor y(Shape{e});
  std::copy(x.data() + index * e, x.data() + (index + 1) * e, y.data());
  const std::uint32_t ia = table.id();
  return t.record(std::move(y), {table},
                  [ia, index, e](Tape& tp, const Tensor& g) {
                    double* ga = tp.grad_buffer(ia).data() + index * e;
                    for (std::size_t j = 0; j < e; ++j) ga[j] += g[j];
                  },
                  "lookup");
}

Var sum(Var a) {
  Tape& t = tape_of(a, "sum");
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v;
  const std::uint32_t ia = a.id();
  return t.record(Tensor::scalar(s), {a},
                  [ia](Tape& tp, const Tensor& g) {
                    Tensor& ga = tp.grad_buffer(ia);
                    for (double& v : ga.values()) v += g[0];
                  },
                  "sum");
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a, "reshape");
  const Tensor& x = a.value();
  if (shape.numel() != x.size()) shape_fail("reshape", x.shape(), shape);
  const std::uint32_t ia = a.id();
  return t.record(Tensor(shape, x.storage()), {a},
                  [ia](Tape& tp, const Tensor& g) {
                    double* ga = tp.grad_buffer(ia).data();
                    for (std::size_t i = 0, n = g.size(); i < n; ++i) ga[i] += g[i];
                  },
                  "reshape");
}

}  // namespace rxl::grad

// SPDX-License-Identifier: Apache-2.0

#include "phredgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace phredgan {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::string two_shapes(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
         shape_str(b.shape());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), two_shapes("add", a, b));
  int ia = tape.import_input(a), ib = tape.import_input(b);
  return tape.record(
      OpTag::kAdd, {ia, ib},
      [](const Tape& t, const std::vector<int>& in) {
        auto xv = t.value_of(in[0]).values(), yv = t.value_of(in[1]).values();
        Tensor out = Tensor::zeros(t.value_of(in[0]).shape());
        auto o = out.mutable_values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] + yv[i];
        return out;
      },
      [ia, ib](Tape& t, int self) {
        auto g = t.grad_of(self);
        auto& ga = t.grad_buffer(ia);
        auto& gb = t.grad_buffer(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
      });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), two_shapes("sub", a, b));
  int ia = tape.import_input(a), ib = tape.import_input(b);
  return tape.record(
      OpTag::kSub, {ia, ib},
      [](const Tape& t, const std::vector<int>& in) {
        auto xv = t.value_of(in[0]).values(), yv = t.value_of(in[1]).values();
        Tensor out = Tensor::zeros(t.value_of(in[0]).shape());
        auto o = out.mutable_values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] - yv[i];
        return out;
      },
      [ia, ib](Tape& t, int self) {
        auto g = t.grad_of(self);
        auto& ga = t.grad_buffer(ia);
        auto& gb = t.grad_buffer(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
      });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), two_shapes("mul", a, b));
  int ia = tape.import_input(a), ib = tape.import_input(b);
  return tape.record(
      OpTag::kMul, {ia, ib},
      [](const Tape& t, const std::vector<int>& in) {
        auto xv = t.value_of(in[0]).values(), yv = t.value_of(in[1]).values();
        Tensor out = Tensor::zeros(t.value_of(in[0]).shape());
        auto o = out.mutable_values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * yv[i];
        return out;
      },
      [ia, ib](Tape& t, int self) {
        auto g = t.grad_of(self);
        auto xv = t.value_of(ia).values(), yv = t.value_of(ib).values();
        auto& ga = t.grad_buffer(ia);
        auto& gb = t.grad_buffer(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * yv[i];
          gb[i] += g[i] * xv[i];
        }
      });
}

Tensor affine(Tape& tape, const Tensor& x, double m, double c) {
  int ix = tape.import_input(x);
  return tape.record(
      OpTag::kAffine, {ix},
      [m, c](const Tape& t, const std::vector<int>& in) {
        auto xv = t.value_of(in[0]).values();
        Tensor out = Tensor::zeros(t.value_of(in[0]).shape());
        auto o = out.mutable_values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = m * xv[i] + c;
        return out;
      },
      [ix, m](Tape& t, int self) {
        auto g = t.grad_of(self);
        auto& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += m * g[i];
      });
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.rank() == 2, "matmul: left operand must be rank-2, got " + shape_str(a.shape()));
  require(b.rank() == 1 || b.rank() == 2,
          "matmul: right operand must be rank-1 or rank-2, got " + shape_str(b.shape()));
  require(a.shape()[1] == b.shape()[0], two_shapes("matmul", a, b));
  int ia = tape.import_input(a), ib = tape.import_input(b);
  return tape.record(
      OpTag::kMatmul, {ia, ib},
      [](const Tape& t, const std::vector<int>& in) {
        const Tensor& x = t.value_of(in[0]);
        const Tensor& y = t.value_of(in[1]);
        int r = x.shape()[0], k = x.shape()[1];
        auto xv = x.values(), yv = y.values();
        if (y.rank() == 1) {
          Tensor out = Tensor::zeros({r});
          auto o = out.mutable_values();
          for (int i = 0; i < r; ++i) {
            double acc = 0.0;
            const double* row = xv.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < k; ++j) acc += row[j] * yv[j];
            o[i] = acc;
          }
          return out;
        }
        int c = y.shape()[1];
        Tensor out = Tensor::zeros({r, c});
        auto o = out.mutable_values();
        for (int i = 0; i < r; ++i) {
          const double* row = xv.data() + static_cast<std::size_t>(i) * k;
          double* orow = o.data() + static_cast<std::size_t>(i) * c;
          for (int j = 0; j < k; ++j) {
            double v = row[j];
            const double* yrow = yv.data() + static_cast<std::size_t>(j) * c;
            for (int l = 0; l < c; ++l) orow[l] += v * yrow[l];
          }
        }
        return out;
      },
      [ia, ib](Tape& t, int self) {
        auto g = t.grad_of(self);
        const Tensor& x = t.value_of(ia);
        const Tensor& y = t.value_of(ib);
        int r = x.shape()[0], k = x.shape()[1];
        auto xv = x.values(), yv = y.values();
        auto& ga = t.grad_buffer(ia);
        auto& gb = t.grad_buffer(ib);
        if (y.rank() == 1) {
          // dA = g (x) y^T, db = A^T g
          for (int i = 0; i < r; ++i) {
            double gi = g[i];
            double* garow = ga.data() + static_cast<std::size_t>(i) * k;
            const double* xrow = xv.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < k; ++j) {
              garow[j] += gi * yv[j];
              gb[j] += gi * xrow[j];
            }
          }
          return;
        }
        int c = y.shape()[1];
        for (int i = 0; i < r; ++i) {
          const double* grow = g.data() + static_cast<std::size_t>(i) * c;
          const double* xrow = xv.data() + static_cast<std::size_t>(i) * k;
          double* garow = ga.data() + static_cast<std::size_t>(i) * k;
          for (int j = 0; j < k; ++j) {
            const double* yrow = yv.data() + static_cast<std::size_t>(j) * c;
            double* gbrow = gb.data() + static_cast<std::size_t>(j) * c;
            double acc = 0.0;
            double xij = xrow[j];
            for (int l = 0; l < c; ++l) {
              acc += grow[l] * yrow[l];
              gbrow[l] += xij * grow[l];
            }
            garow[j] += acc;
          }
        }
      });
}

Tensor vecmat(Tape& tape, const Tensor& w, const Tensor& k) {
  require(w.rank() == 1, "vecmat: weights must be rank-1, got " + shape_str(w.shape()));
  require(k.rank() == 2, "vecmat: matrix must be rank-2, got " + shape_str(k.shape()));
  require(w.shape()[0] == k.shape()[0], two_shapes("vecmat", w, k));
  int iw = tape.import_input(w), ik = tape.import_input(k);
  return tape.record(
      OpTag::kVecmat, {iw, ik},
      [](const Tape& t, const std::vector<int>& in) {
        auto wv = t.value_of(in[0]).values();
        const Tensor& m = t.value_of(in[1]);
        int rows_n = m.shape()[0], d = m.shape()[1];
        auto mv = m.values();
        Tensor out = Tensor::zeros({d});
        auto o = out.mutable_values();
        for (int i = 0; i < rows_n; ++i) {
          double wi = wv[i];
          const double* row = mv.data() + static_cast<std::size_t>(i) * d;
          for (int j = 0; j < d; ++j) o[j] += wi * row[j];
        }
        return out;
      },
      [iw, ik](Tape& t, int self) {
        auto g = t.grad_of(self);
        auto wv = t.value_of(iw).values();
        const Tensor& m = t.value_of(ik);
        int rows_n = m.shape()[0], d = m.shape()[1];
        auto mv = m.values();
        auto& gw = t.grad_buffer(iw);
        auto& gk = t.grad_buffer(ik);
        for (int i = 0; i < rows_n; ++i) {
          const double* row = mv.data() + static_cast<std::size_t>(i) * d;
          double* grow = gk.data() + static_cast<std::size_t>(i) * d;
          double acc = 0.0;
          double wi = wv[i];
          for (int j = 0; j < d; ++j) {
            acc += g[j] * row[j];
            grow[j] += wi * g[j];
          }
          gw[i] += acc;
        }
      });
}

Tensor add_rowvec(Tape& tape, const Tensor& m, const Tensor& v) {
  require(m.rank() == 2 && v.rank() == 1 && m.shape()[1] == v.shape()[0],
          two_shapes("add_rowvec", m, v));
  int im = tape.import_input(m), iv = tape.import_input(v);
  return tape.record(
      OpTag::kAddRowvec, {im, iv},
      [](const Tape& t, const std::vector<int>& in) {
        const Tensor& x = t.value_of(in[0]);
        auto xv = x.values(), vv = t.value_of(in[1]).values();
        int rows_n = x.shape()[0], d = x.shape()[1];
        Tensor out = Tensor::zeros(x.shape());
        auto o = out.mutable_values();
        for (int i = 0; i < rows_n; ++i)
          for (int j = 0; j < d; ++j)
            o[static_cast<std::size_t>(i) * d + j] = xv[static_cast<std::size_t>(i) * d + j] + vv[j];
        return out;
      },
      [im, iv](Tape& t, int self) {
        auto g = t.grad_of(self);
        const Tensor& x = t.value_of(im);
        int rows_n = x.shape()[0], d = x.shape()[1];
        auto& gm = t.grad_buffer(im);
        auto& gv = t.grad_buffer(iv);
        for (int i = 0; i < rows_n; ++i)
          for (int j = 0; j < d; ++j) {
            double gij = g[static_cast<std::size_t>(i) * d + j];
            gm[static_cast<std::size_t>(i) * d + j] += gij;
            gv[j] += gij;
          }
      });
}

Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  int rank = parts[0].rank();
  require(rank == 1 || rank == 2, "concat: rank-1 or rank-2 only, got " + shape_str(parts[0].shape()));
  require(axis == 0 || (axis == 1 && rank == 2), "concat: invalid axis " + std::to_string(axis));
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (const Tensor& p : parts) {
    require(p.rank() == rank, two_shapes("concat", parts[0], p));
    if (rank == 2)
      require(p.shape()[1 - axis] == parts[0].shape()[1 - axis], two_shapes("concat", parts[0], p));
    ids.push_back(tape.import_input(p));
  }
  return tape.record(
      OpTag::kConcat, ids,
      [axis, rank](const Tape& t, const std::vector<int>& in) {
        if (rank == 1 || axis == 0) {
          int total = 0;
          for (int id : in) total += t.value_of(id).shape()[0];
          std::vector<int> shape =
              rank == 1 ? std::vector<int>{total} : std::vector<int>{total, t.value_of(in[0]).shape()[1]};
          Tensor out = Tensor::zeros(shape);
          auto o = out.mutable_values();
          std::size_t off = 0;
          for (int id : in) {
            auto pv = t.value_of(id).values();
            std::copy(pv.begin(), pv.end(), o.begin() + off);
            off += pv.size();
          }
          return out;
        }
        // rank-2, axis 1: widen rows
        int rows_n = t.value_of(in[0]).shape()[0];
        int width = 0;
        for (int id : in) width += t.value_of(id).shape()[1];
        Tensor out = Tensor::zeros({rows_n, width});
        auto o = out.mutable_values();
        int col = 0;
        for (int id : in) {
          const Tensor& p = t.value_of(id);
          int pc = p.shape()[1];
          auto pv = p.values();
          for (int r = 0; r < rows_n; ++r)
            std::copy(pv.begin() + static_cast<std::size_t>(r) * pc,
                      pv.begin() + static_cast<std::size_t>(r + 1) * pc,
                      o.begin() + static_cast<std::size_t>(r) * width + col);
          col += pc;
        }
        return out;
      },
      [ids, axis, rank](Tape& t, int self) {
        auto g = t.grad_of(self);
        if (rank == 1 || axis == 0) {
          std::size_t off = 0;
          for (int id : ids) {
            auto& gp = t.grad_buffer(id);
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
            off += gp.size();
          }
          return;
        }
        int rows_n = t.value_of(ids[0]).shape()[0];
        int width = static_cast<int>(g.size()) / rows_n;
        int col = 0;
        for (int id : ids) {
          const Tensor& p = t.value_of(id);
          int pc = p.shape()[1];
          auto& gp = t.grad_buffer(id);
          for (int r = 0; r < rows_n; ++r)
            for (int c = 0; c < pc; ++c)
              gp[static_cast<std::size_t>(r) * pc + c] +=
                  g[static_cast<std::size_t>(r) * width + col + c];
          col += pc;
        }
      });
}

Tensor slice(Tape& tape, const Tensor& x, int start, int len) {
  require(x.rank() == 1 || x.rank() == 2, "slice: rank-1 or rank-2 only, got " + shape_str(x.shape()));
  require(start >= 0 && len >= 1 && start + len <= x.shape()[0],
          "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
              ") outside axis 0 of " + shape_str(x.shape()));
  int ix = tape.import_input(x);
  return tape.record(
      OpTag::kSlice, {ix},
      [start, len](const Tape& t, const std::vector<int>& in) {
        const Tensor& v = t.value_of(in[0]);
        int stride = v.rank() == 2 ? v.shape()[1] : 1;
        std::vector<int> shape = v.rank() == 2 ? std::vector<int>{len, v.shape()[1]} : std::vector<int>{len};
        Tensor out = Tensor::zeros(shape);
        auto o = out.mutable_values();
        auto vv = v.values();
        std::copy(vv.begin() + static_cast<std::size_t>(start) * stride,
                  vv.begin() + static_cast<std::size_t>(start + len) * stride, o.begin());
        return out;
      },
      [ix, start](Tape& t, int self) {
        auto g = t.grad_of(self);
        const Tensor& v = t.value_of(ix);
        int stride = v.rank() == 2 ? v.shape()[1] : 1;
        auto& gx = t.grad_buffer(ix);
        std::size_t off = static_cast<std::size_t>(start) * stride;
        for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
      });
}

Tensor rows(Tape& tape, const Tensor& table, std::vector<int> ids) {
  require(table.rank() == 1 || table.rank() == 2,
          "rows: rank-1 or rank-2 only, got " + shape_str(table.shape()));
  require(!ids.empty(), "rows: empty id list");
  for (int id : ids)
    require(id >= 0 && id < table.shape()[0],
            "rows: id " + std::to_string(id) + " outside axis 0 of " + shape_str(table.shape()));
  int it = tape.import_input(table);
  return tape.record(
      OpTag::kRows, {it},
      [ids](const Tape& t, const std::vector<int>& in) {
        const Tensor& v = t.value_of(in[0]);
        int stride = v.rank() == 2 ? v.shape()[1] : 1;
        int n = static_cast<int>(ids.size());
        std::vector<int> shape = v.rank() == 2 ? std::vector<int>{n, v.shape()[1]} : std::vector<int>{n};
        Tensor out = Tensor::zeros(shape);
        auto o = out.mutable_values();
        auto vv = v.values();
        for (int i = 0; i < n; ++i)
          std::copy(vv.begin() + static_cast<std::size_t>(ids[i]) * stride,
                    vv.begin() + static_cast<std::size_t>(ids[i] + 1) * stride,
                    o.begin() + static_cast<std::size_t>(i) * stride);
        return out;
      },
      [it, ids](Tape& t, int self) {
        auto g = t.grad_of(self);
        const Tensor& v = t.value_of(it);
        int stride = v.rank() == 2 ? v.shape()[1] : 1;
        auto& gt = t.grad_buffer(it);
        for (std::size_t i = 0; i < ids.size(); ++i)
          for (int j = 0; j < stride; ++j)
            gt[static_cast<std::size_t>(ids[i]) * stride + j] += g[i * stride + j];
      });
}

Tensor reshape(Tape& tape, const Tensor& x, std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d > 0 ? d : 0);
  require(n == static_cast<std::size_t>(x.size()),
          "reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  int ix = tape.import_input(x);
  return tape.record(
      OpTag::kReshape, {ix},
      [shape](const Tape& t, const std::vector<int>& in) {
        auto vv = t.value_of(in[0]).values();
        return Tensor::from(shape, std::vector<double>(vv.begin(), vv.end()));
      },
      [ix](Tape& t, int self) {
        auto g = t.grad_of(self);
        auto& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      });
}

namespace {

template <typename F>
Tensor unary_eltwise(Tape& tape, const Tensor& x, OpTag tag, F&& f,
                     void (*bwd)(std::span<const double> g, std::span<const double> y,
                                 std::span<const double> x, std::vector<double>& gx)) {
  int ix = tape.import_input(x);
  return tape.record(
      tag, {ix},
      [f](const Tape& t, const std::vector<int>& in) {
        auto xv = t.value_of(in[0]).values();
        Tensor out = Tensor::zeros(t.value_of(in[0]).shape());
        auto o = out.mutable_values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(xv[i]);
        return out;
      },
      [ix, bwd](Tape& t, int self) {
        bwd(t.grad_of(self), t.value_of(self).values(), t.value_of(ix).values(),
            t.grad_buffer(ix));
      });
}

}  // namespace

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary_eltwise(
      tape, x, OpTag::kSigmoid, [](double v) { return stable_sigmoid(v); },
      [](std::span<const double> g, std::span<const double> y, std::span<const double>,
         std::vector<double>& gx) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      });
}

Tensor tanh_op(Tape& tape, const Tensor& x) {
  return unary_eltwise(
      tape, x, OpTag::kTanh, [](double v) { return std::tanh(v); },
      [](std::span<const double> g, std::span<const double> y, std::span<const double>,
         std::vector<double>& gx) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
      });
}

Tensor log_op(Tape& tape, const Tensor& x) {
  return unary_eltwise(
      tape, x, OpTag::kLog, [](double v) { return std::log(v < kLogFloor ? kLogFloor : v); },
      [](std::span<const double> g, std::span<const double>, std::span<const double> x,
         std::vector<double>& gx) {
        // clamped region is flat: zero gradient below the floor
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x[i] >= kLogFloor) gx[i] += g[i] / x[i];
      });
}

Tensor softmax(Tape& tape, const Tensor& x) {
  require(x.rank() == 1 || x.rank() == 2, "softmax: rank-1 or rank-2 only, got " + shape_str(x.shape()));
  int ix = tape.import_input(x);
  return tape.record(
      OpTag::kSoftmax, {ix},
      [](const Tape& t, const std::vector<int>& in) {
        const Tensor& v = t.value_of(in[0]);
        int cols = v.rank() == 2 ? v.shape()[1] : v.shape()[0];
        int rows_n = v.size() / cols;
        auto xv = v.values();
        Tensor out = Tensor::zeros(v.shape());
        auto o = out.mutable_values();
        for (int r = 0; r < rows_n; ++r) {
          const double* row = xv.data() + static_cast<std::size_t>(r) * cols;
          double* orow = o.data() + static_cast<std::size_t>(r) * cols;
          double mx = row[0];
          for (int i = 1; i < cols; ++i) mx = std::max(mx, row[i]);
          // Kahan-summed denominator so outputs sum to 1 within 1e-12
          // even for large vocabularies
          double s = 0.0, comp = 0.0;
          for (int i = 0; i < cols; ++i) {
            orow[i] = std::exp(row[i] - mx);
            double yk = orow[i] - comp;
            double tk = s + yk;
            comp = (tk - s) - yk;
            s = tk;
          }
          for (int i = 0; i < cols; ++i) orow[i] /= s;
        }
        return out;
      },
      [ix](Tape& t, int self) {
        auto g = t.grad_of(self);
        const Tensor& y = t.value_of(self);
        int cols = y.rank() == 2 ? y.shape()[1] : y.shape()[0];
        int rows_n = y.size() / cols;
        auto yv = y.values();
        auto& gx = t.grad_buffer(ix);
        for (int r = 0; r < rows_n; ++r) {
          const double* grow = g.data() + static_cast<std::size_t>(r) * cols;
          const double* yrow = yv.data() + static_cast<std::size_t>(r) * cols;
          double dot = 0.0;
          for (int i = 0; i < cols; ++i) dot += grow[i] * yrow[i];
          double* gxrow = gx.data() + static_cast<std::size_t>(r) * cols;
          for (int i = 0; i < cols; ++i) gxrow[i] += yrow[i] * (grow[i] - dot);
        }
      });
}

Tensor sum(Tape& tape, const Tensor& x) {
  int ix = tape.import_input(x);
  return tape.record(
      OpTag::kSum, {ix},
      [](const Tape& t, const std::vector<int>& in) {
        double s = 0.0;
        for (double v : t.value_of(in[0]).values()) s += v;
        return Tensor::scalar(s);
      },
      [ix](Tape& t, int self) {
        double g = t.grad_of(self)[0];
        auto& gx = t.grad_buffer(ix);
        for (double& v : gx) v += g;
      });
}

Tensor mean(Tape& tape, const Tensor& x) {
  int ix = tape.import_input(x);
  const int n = x.size();
  return tape.record(
      OpTag::kMean, {ix},
      [n](const Tape& t, const std::vector<int>& in) {
        double s = 0.0;
        for (double v : t.value_of(in[0]).values()) s += v;
        return Tensor::scalar(s / n);
      },
      [ix, n](Tape& t, int self) {
        double g = t.grad_of(self)[0] / n;
        auto& gx = t.grad_buffer(ix);
        for (double& v : gx) v += g;
      });
}

}  // namespace phredgan

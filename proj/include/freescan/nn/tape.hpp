#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "freescan/nn/mat.hpp"

namespace freescan::nn {

struct Conv2dSpec {
  int in_ch = 1;
  int in_h = 0;
  int in_w = 0;
  int out_ch = 1;
  int kernel = 3;
  int stride = 2;
  int pad = 1;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

/// Define-by-run reverse-mode tape. Build the graph with the op methods,
/// then call backward(loss) once; gradients accumulate into every node with
/// requires_grad set (leaves included). The tape owns all intermediate
/// values, so one Tape instance per forward pass.
template <class S>
class Tape {
 public:
  using Id = std::int32_t;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Id leaf(Mat<S> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, {});
  }

  const Mat<S>& value(Id id) const { return nodes_[check(id)].value; }
  const Mat<S>& grad(Id id) const { return nodes_[check(id)].grad; }
  bool requires_grad(Id id) const { return nodes_[check(id)].requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // ---- elementwise ----

  Id add(Id a, Id b) {
    same_shape(a, b, "add");
    Mat<S> out = nodes_[a].value;
    out.map() += nodes_[b].value.map();
    return unary_or_binary(std::move(out), a, b, [this](Id y, Id a, Id b) {
      if (nodes_[a].requires_grad) nodes_[a].grad.map() += nodes_[y].grad.map();
      if (nodes_[b].requires_grad) nodes_[b].grad.map() += nodes_[y].grad.map();
    });
  }

  Id sub(Id a, Id b) {
    same_shape(a, b, "sub");
    Mat<S> out = nodes_[a].value;
    out.map() -= nodes_[b].value.map();
    return unary_or_binary(std::move(out), a, b, [this](Id y, Id a, Id b) {
      if (nodes_[a].requires_grad) nodes_[a].grad.map() += nodes_[y].grad.map();
      if (nodes_[b].requires_grad) nodes_[b].grad.map() -= nodes_[y].grad.map();
    });
  }

  Id mul(Id a, Id b) {
    same_shape(a, b, "mul");
    Mat<S> out = nodes_[a].value;
    out.map().array() *= nodes_[b].value.map().array();
    return unary_or_binary(std::move(out), a, b, [this](Id y, Id a, Id b) {
      if (nodes_[a].requires_grad) {
        nodes_[a].grad.map().array() +=
            nodes_[y].grad.map().array() * nodes_[b].value.map().array();
      }
      if (nodes_[b].requires_grad) {
        nodes_[b].grad.map().array() +=
            nodes_[y].grad.map().array() * nodes_[a].value.map().array();
      }
    });
  }

  Id scale(Id a, double c) {
    Mat<S> out = nodes_[a].value;
    out.map() *= static_cast<S>(c);
    const bool rg = nodes_[a].requires_grad;
    return push(std::move(out), rg, [this, a, c](Id y) {
      if (nodes_[a].requires_grad) {
        nodes_[a].grad.map() += static_cast<S>(c) * nodes_[y].grad.map();
      }
    });
  }

  Id relu(Id a) {
    Mat<S> out = nodes_[a].value;
    for (auto& x : out.v) x = x > S(0) ? x : S(0);
    const bool rg = nodes_[a].requires_grad;
    return push(std::move(out), rg, [this, a](Id y) {
      if (!nodes_[a].requires_grad) return;
      const auto& val = nodes_[a].value.v;
      const auto& gy = nodes_[y].grad.v;
      auto& ga = nodes_[a].grad.v;
      for (std::size_t i = 0; i < ga.size(); ++i) {
        if (val[i] > S(0)) ga[i] += gy[i];
      }
    });
  }

  Id sigmoid(Id a) {
    Mat<S> out = nodes_[a].value;
    for (auto& x : out.v) {
      x = x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                    : std::exp(x) / (S(1) + std::exp(x));
    }
    const bool rg = nodes_[a].requires_grad;
    return push(std::move(out), rg, [this, a](Id y) {
      if (!nodes_[a].requires_grad) return;
      const auto& val = nodes_[y].value.v;
      const auto& gy = nodes_[y].grad.v;
      auto& ga = nodes_[a].grad.v;
      for (std::size_t i = 0; i < ga.size(); ++i) {
        ga[i] += gy[i] * val[i] * (S(1) - val[i]);
      }
    });
  }

  Id tanh(Id a) {
    Mat<S> out = nodes_[a].value;
    for (auto& x : out.v) x = std::tanh(x);
    const bool rg = nodes_[a].requires_grad;
    return push(std::move(out), rg, [this, a](Id y) {
      if (!nodes_[a].requires_grad) return;
      const auto& val = nodes_[y].value.v;
      const auto& gy = nodes_[y].grad.v;
      auto& ga = nodes_[a].grad.v;
      for (std::size_t i = 0; i < ga.size(); ++i) {
        ga[i] += gy[i] * (S(1) - val[i] * val[i]);
      }
    });
  }

  // ---- shape ----

  Id reshape(Id a, std::int64_t r, std::int64_t c) {
    if (r * c != nodes_[a].value.size()) {
      throw NumericalError("reshape: element count mismatch");
    }
    Mat<S> out(r, c);
    out.v = nodes_[a].value.v;
    const bool rg = nodes_[a].requires_grad;
    return push(std::move(out), rg, [this, a](Id y) {
      if (!nodes_[a].requires_grad) return;
      const auto& gy = nodes_[y].grad.v;
      auto& ga = nodes_[a].grad.v;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
    });
  }

  Id slice_cols(Id a, std::int64_t lo, std::int64_t len) {
    const Mat<S>& x = nodes_[a].value;
    if (lo < 0 || lo + len > x.cols) {
      throw NumericalError("slice_cols: range out of bounds");
    }
    Mat<S> out(x.rows, len);
    out.map() = x.map().middleCols(lo, len);
    const bool rg = nodes_[a].requires_grad;
    return push(std::move(out), rg, [this, a, lo, len](Id y) {
      if (!nodes_[a].requires_grad) return;
      nodes_[a].grad.map().middleCols(lo, len) += nodes_[y].grad.map();
    });
  }

  Id concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw NumericalError("concat_cols: empty input");
    const std::int64_t rows = nodes_[parts[0]].value.rows;
    std::int64_t cols = 0;
    bool rg = false;
    for (Id p : parts) {
      if (nodes_[p].value.rows != rows) {
        throw NumericalError("concat_cols: row count mismatch");
      }
      cols += nodes_[p].value.cols;
      rg = rg || nodes_[p].requires_grad;
    }
    Mat<S> out(rows, cols);
    std::int64_t at = 0;
    for (Id p : parts) {
      out.map().middleCols(at, nodes_[p].value.cols) = nodes_[p].value.map();
      at += nodes_[p].value.cols;
    }
    return push(std::move(out), rg, [this, parts](Id y) {
      std::int64_t at = 0;
      for (Id p : parts) {
        const std::int64_t c = nodes_[p].value.cols;
        if (nodes_[p].requires_grad) {
          nodes_[p].grad.map() += nodes_[y].grad.map().middleCols(at, c);
        }
        at += c;
      }
    });
  }

  Id gather_rows(Id a, std::vector<std::int64_t> idx) {
    const Mat<S>& x = nodes_[a].value;
    Mat<S> out(static_cast<std::int64_t>(idx.size()), x.cols);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0 || idx[r] >= x.rows) {
        throw NumericalError("gather_rows: index out of bounds");
      }
      out.map().row(static_cast<std::int64_t>(r)) = x.map().row(idx[r]);
    }
    const bool rg = nodes_[a].requires_grad;
    return push(std::move(out), rg, [this, a, idx = std::move(idx)](Id y) {
      if (!nodes_[a].requires_grad) return;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        nodes_[a].grad.map().row(idx[r]) +=
            nodes_[y].grad.map().row(static_cast<std::int64_t>(r));
      }
    });
  }

  // ---- dense layers ----

  /// y = x * W^T + b; x {R,K}, W {F,K}, b {1,F}.
  Id linear(Id x, Id w, Id b) {
    const Mat<S>& xv = nodes_[x].value;
    const Mat<S>& wv = nodes_[w].value;
    const Mat<S>& bv = nodes_[b].value;
    if (xv.cols != wv.cols || bv.rows != 1 || bv.cols != wv.rows) {
      throw NumericalError("linear: shape mismatch");
    }
    Mat<S> out(xv.rows, wv.rows);
    out.map().noalias() = xv.map() * wv.map().transpose();
    out.map().rowwise() += bv.map().row(0);
    const bool rg = nodes_[x].requires_grad || nodes_[w].requires_grad ||
                    nodes_[b].requires_grad;
    return push(std::move(out), rg, [this, x, w, b](Id y) {
      const auto gy = nodes_[y].grad.map();
      if (nodes_[x].requires_grad) {
        nodes_[x].grad.map().noalias() += gy * nodes_[w].value.map();
      }
      if (nodes_[w].requires_grad) {
        nodes_[w].grad.map().noalias() +=
            gy.transpose() * nodes_[x].value.map();
      }
      if (nodes_[b].requires_grad) {
        nodes_[b].grad.map().row(0) += gy.colwise().sum();
      }
    });
  }

  /// x {N, C*H*W} -> y {N, K*OH*OW}; weight {K, C*k*k}, bias {1,K}.
  Id conv2d(Id x, Id w, Id b, const Conv2dSpec& spec) {
    const Mat<S>& xv = nodes_[x].value;
    const Mat<S>& wv = nodes_[w].value;
    const Mat<S>& bv = nodes_[b].value;
    const std::int64_t patch = static_cast<std::int64_t>(spec.in_ch) *
                               spec.kernel * spec.kernel;
    if (xv.cols != static_cast<std::int64_t>(spec.in_ch) * spec.in_h *
                       spec.in_w ||
        wv.rows != spec.out_ch || wv.cols != patch || bv.rows != 1 ||
        bv.cols != spec.out_ch) {
      throw NumericalError("conv2d: shape mismatch");
    }
    const std::int64_t n = xv.rows;
    const std::int64_t omap = static_cast<std::int64_t>(spec.out_h()) *
                              spec.out_w();
    Mat<S> col = im2col(xv, spec);  // {patch, N*omap}
    Mat<S> prod(spec.out_ch, n * omap);
    prod.map().noalias() = wv.map() * col.map();

    Mat<S> out(n, spec.out_ch * omap);
    for (std::int64_t s = 0; s < n; ++s) {
      for (std::int64_t k = 0; k < spec.out_ch; ++k) {
        out.map().row(s).segment(k * omap, omap) =
            prod.map().row(k).segment(s * omap, omap).array() + bv(0, k);
      }
    }
    const bool rg = nodes_[x].requires_grad || nodes_[w].requires_grad ||
                    nodes_[b].requires_grad;
    return push(std::move(out), rg, [this, x, w, b, spec](Id y) {
      const Mat<S>& xv = nodes_[x].value;
      const std::int64_t n = xv.rows;
      const std::int64_t omap = static_cast<std::int64_t>(spec.out_h()) *
                                spec.out_w();
      // Regroup dY {N, K*omap} into {K, N*omap} to match the GEMM layout.
      Mat<S> gprod(spec.out_ch, n * omap);
      for (std::int64_t s = 0; s < n; ++s) {
        for (std::int64_t k = 0; k < spec.out_ch; ++k) {
          gprod.map().row(k).segment(s * omap, omap) =
              nodes_[y].grad.map().row(s).segment(k * omap, omap);
        }
      }
      if (nodes_[b].requires_grad) {
        nodes_[b].grad.map().row(0) +=
            gprod.map().rowwise().sum().transpose();
      }
      if (nodes_[w].requires_grad) {
        Mat<S> col = im2col(xv, spec);
        nodes_[w].grad.map().noalias() += gprod.map() * col.map().transpose();
      }
      if (nodes_[x].requires_grad) {
        Mat<S> gcol(nodes_[w].value.cols, n * omap);
        gcol.map().noalias() =
            nodes_[w].value.map().transpose() * gprod.map();
        col2im_add(gcol, spec, nodes_[x].grad);
      }
    });
  }

  /// Mean over each cell of a grid x grid partition of every channel map:
  /// {N, C*H*W} -> {N, C*grid*grid}. grid=1 is global average pooling.
  Id avg_pool_grid(Id a, int channels, int h, int w, int grid) {
    const Mat<S>& x = nodes_[a].value;
    if (x.cols != static_cast<std::int64_t>(channels) * h * w || grid < 1 ||
        grid > h || grid > w) {
      throw NumericalError("avg_pool_grid: bad arguments");
    }
    Mat<S> out(x.rows, static_cast<std::int64_t>(channels) * grid * grid);
    pool_loop(channels, h, w, grid, [&](int c, int gy, int gx, int y0, int y1,
                                        int x0, int x1) {
      const std::int64_t o =
          (static_cast<std::int64_t>(c) * grid + gy) * grid + gx;
      const S inv = S(1) / static_cast<S>((y1 - y0) * (x1 - x0));
      for (std::int64_t sN = 0; sN < x.rows; ++sN) {
        S acc = 0;
        for (int yy = y0; yy < y1; ++yy) {
          for (int xx = x0; xx < x1; ++xx) {
            acc += x(sN, (static_cast<std::int64_t>(c) * h + yy) * w + xx);
          }
        }
        out(sN, o) = acc * inv;
      }
    });
    const bool rg = nodes_[a].requires_grad;
    return push(std::move(out), rg, [this, a, channels, h, w, grid](Id y) {
      if (!nodes_[a].requires_grad) return;
      auto& ga = nodes_[a].grad;
      const auto& gy = nodes_[y].grad;
      pool_loop(channels, h, w, grid, [&](int c, int gyy, int gxx, int y0,
                                          int y1, int x0, int x1) {
        const std::int64_t o =
            (static_cast<std::int64_t>(c) * grid + gyy) * grid + gxx;
        const S inv = S(1) / static_cast<S>((y1 - y0) * (x1 - x0));
        for (std::int64_t sN = 0; sN < ga.rows; ++sN) {
          const S g = gy(sN, o) * inv;
          for (int yy = y0; yy < y1; ++yy) {
            for (int xx = x0; xx < x1; ++xx) {
              ga(sN, (static_cast<std::int64_t>(c) * h + yy) * w + xx) += g;
            }
          }
        }
      });
    });
  }

  // ---- rigid geometry ----

  /// Per row: intrinsic Z-Y-X Euler angles (z,y,x) -> row-major 3x3 rotation.
  Id euler_to_rot(Id a) {
    const Mat<S>& e = nodes_[a].value;
    if (e.cols != 3) throw NumericalError("euler_to_rot: expects {R,3}");
    Mat<S> out(e.rows, 9);
    for (std::int64_t r = 0; r < e.rows; ++r) {
      S rz[9], ry[9], rx[9];
      basis_rotations(e(r, 0), e(r, 1), e(r, 2), rz, ry, rx, nullptr, nullptr,
                      nullptr);
      S tmp[9], rot[9];
      mat3_mul(ry, rx, tmp);
      mat3_mul(rz, tmp, rot);
      for (int k = 0; k < 9; ++k) out(r, k) = rot[k];
    }
    const bool rg = nodes_[a].requires_grad;
    return push(std::move(out), rg, [this, a](Id y) {
      if (!nodes_[a].requires_grad) return;
      const Mat<S>& e = nodes_[a].value;
      for (std::int64_t r = 0; r < e.rows; ++r) {
        S rz[9], ry[9], rx[9], dz[9], dy[9], dx[9];
        basis_rotations(e(r, 0), e(r, 1), e(r, 2), rz, ry, rx, dz, dy, dx);
        S yx[9], t1[9], t2[9], d_rot[3][9];
        mat3_mul(ry, rx, yx);
        mat3_mul(dz, yx, d_rot[0]);
        mat3_mul(dy, rx, t1);
        mat3_mul(rz, t1, d_rot[1]);
        mat3_mul(ry, dx, t2);
        mat3_mul(rz, t2, d_rot[2]);
        for (int ang = 0; ang < 3; ++ang) {
          S acc = 0;
          for (int k = 0; k < 9; ++k) acc += nodes_[y].grad(r, k) * d_rot[ang][k];
          nodes_[a].grad(r, ang) += acc;
        }
      }
    });
  }

  /// Rowwise 3x3 product C = A*B on {R,9} rotations.
  Id rot_compose(Id a, Id b) {
    same_shape(a, b, "rot_compose");
    if (nodes_[a].value.cols != 9) {
      throw NumericalError("rot_compose: expects {R,9}");
    }
    const Mat<S>& av = nodes_[a].value;
    const Mat<S>& bv = nodes_[b].value;
    Mat<S> out(av.rows, 9);
    for (std::int64_t r = 0; r < av.rows; ++r) {
      mat3_mul(&av.v[r * 9], &bv.v[r * 9], &out.v[r * 9]);
    }
    return unary_or_binary(std::move(out), a, b, [this](Id y, Id a, Id b) {
      const Mat<S>& av = nodes_[a].value;
      const Mat<S>& bv = nodes_[b].value;
      const Mat<S>& gy = nodes_[y].grad;
      for (std::int64_t r = 0; r < av.rows; ++r) {
        const S* ap = &av.v[r * 9];
        const S* bp = &bv.v[r * 9];
        const S* gp = &gy.v[r * 9];
        if (nodes_[a].requires_grad) {
          S* ga = &nodes_[a].grad.v[r * 9];
          // dA += dC * B^T
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
              S acc = 0;
              for (int k = 0; k < 3; ++k) acc += gp[i * 3 + k] * bp[j * 3 + k];
              ga[i * 3 + j] += acc;
            }
        }
        if (nodes_[b].requires_grad) {
          S* gb = &nodes_[b].grad.v[r * 9];
          // dB += A^T * dC
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
              S acc = 0;
              for (int k = 0; k < 3; ++k) acc += ap[k * 3 + i] * gp[k * 3 + j];
              gb[i * 3 + j] += acc;
            }
        }
      }
    });
  }

  /// Rowwise rotate: y = R * v; rot {R,9}, vec {R,3}.
  Id rot_apply(Id rot, Id vec) {
    const Mat<S>& rv = nodes_[rot].value;
    const Mat<S>& vv = nodes_[vec].value;
    if (rv.cols != 9 || vv.cols != 3 || rv.rows != vv.rows) {
      throw NumericalError("rot_apply: shape mismatch");
    }
    Mat<S> out(rv.rows, 3);
    for (std::int64_t r = 0; r < rv.rows; ++r) {
      const S* m = &rv.v[r * 9];
      const S* x = &vv.v[r * 3];
      for (int i = 0; i < 3; ++i) {
        out(r, i) = m[i * 3] * x[0] + m[i * 3 + 1] * x[1] + m[i * 3 + 2] * x[2];
      }
    }
    const bool rg = nodes_[rot].requires_grad || nodes_[vec].requires_grad;
    return push(std::move(out), rg, [this, rot, vec](Id y) {
      const Mat<S>& rv = nodes_[rot].value;
      const Mat<S>& vv = nodes_[vec].value;
      const Mat<S>& gy = nodes_[y].grad;
      for (std::int64_t r = 0; r < rv.rows; ++r) {
        const S* m = &rv.v[r * 9];
        const S* x = &vv.v[r * 3];
        const S* g = &gy.v[r * 3];
        if (nodes_[rot].requires_grad) {
          S* gr = &nodes_[rot].grad.v[r * 9];
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) gr[i * 3 + j] += g[i] * x[j];
        }
        if (nodes_[vec].requires_grad) {
          S* gv = &nodes_[vec].grad.v[r * 3];
          for (int j = 0; j < 3; ++j) {
            gv[j] += m[j] * g[0] + m[3 + j] * g[1] + m[6 + j] * g[2];
          }
        }
      }
    });
  }

  /// y(r, 3n..3n+2) = R_r * p_n + t_r for constant points {P,3}.
  Id rigid_apply_points(Id rot, Id trans, Mat<S> points) {
    const Mat<S>& rv = nodes_[rot].value;
    const Mat<S>& tv = nodes_[trans].value;
    if (rv.cols != 9 || tv.cols != 3 || rv.rows != tv.rows ||
        points.cols != 3) {
      throw NumericalError("rigid_apply_points: shape mismatch");
    }
    const std::int64_t np = points.rows;
    Mat<S> out(rv.rows, 3 * np);
    for (std::int64_t r = 0; r < rv.rows; ++r) {
      const S* m = &rv.v[r * 9];
      const S* t = &tv.v[r * 3];
      for (std::int64_t n = 0; n < np; ++n) {
        const S* p = &points.v[n * 3];
        for (int i = 0; i < 3; ++i) {
          out(r, 3 * n + i) = m[i * 3] * p[0] + m[i * 3 + 1] * p[1] +
                              m[i * 3 + 2] * p[2] + t[i];
        }
      }
    }
    const bool rg = nodes_[rot].requires_grad || nodes_[trans].requires_grad;
    return push(std::move(out), rg,
                [this, rot, trans, points = std::move(points)](Id y) {
      const Mat<S>& gy = nodes_[y].grad;
      const std::int64_t np = points.rows;
      for (std::int64_t r = 0; r < gy.rows; ++r) {
        if (nodes_[rot].requires_grad) {
          S* gr = &nodes_[rot].grad.v[r * 9];
          for (std::int64_t n = 0; n < np; ++n) {
            const S* p = &points.v[n * 3];
            const S* g = &gy.v[r * gy.cols + 3 * n];
            for (int i = 0; i < 3; ++i)
              for (int j = 0; j < 3; ++j) gr[i * 3 + j] += g[i] * p[j];
          }
        }
        if (nodes_[trans].requires_grad) {
          S* gt = &nodes_[trans].grad.v[r * 3];
          for (std::int64_t n = 0; n < np; ++n) {
            const S* g = &gy.v[r * gy.cols + 3 * n];
            for (int i = 0; i < 3; ++i) gt[i] += g[i];
          }
        }
      }
    });
  }

  // ---- reductions ----

  Id mean_all(Id a) {
    const Mat<S>& x = nodes_[a].value;
    if (x.size() == 0) throw NumericalError("mean_all: empty input");
    Mat<S> out(1, 1);
    S acc = 0;
    for (S v : x.v) acc += v;
    out(0, 0) = acc / static_cast<S>(x.size());
    const bool rg = nodes_[a].requires_grad;
    return push(std::move(out), rg, [this, a](Id y) {
      if (!nodes_[a].requires_grad) return;
      const S g = nodes_[y].grad(0, 0) /
                  static_cast<S>(nodes_[a].value.size());
      for (auto& v : nodes_[a].grad.v) v += g;
    });
  }

  Id weighted_sum(const std::vector<Id>& scalars,
                  const std::vector<double>& weights) {
    if (scalars.size() != weights.size() || scalars.empty()) {
      throw NumericalError("weighted_sum: length mismatch");
    }
    Mat<S> out(1, 1);
    bool rg = false;
    for (std::size_t k = 0; k < scalars.size(); ++k) {
      if (nodes_[scalars[k]].value.size() != 1) {
        throw NumericalError("weighted_sum: inputs must be scalars");
      }
      out(0, 0) += static_cast<S>(weights[k]) * nodes_[scalars[k]].value(0, 0);
      rg = rg || nodes_[scalars[k]].requires_grad;
    }
    return push(std::move(out), rg, [this, scalars, weights](Id y) {
      for (std::size_t k = 0; k < scalars.size(); ++k) {
        if (nodes_[scalars[k]].requires_grad) {
          nodes_[scalars[k]].grad(0, 0) +=
              static_cast<S>(weights[k]) * nodes_[y].grad(0, 0);
        }
      }
    });
  }

  /// Mean squared difference between two same-shape nodes, as one scalar.
  Id mse(Id a, Id b) { return mean_all(square(sub(a, b))); }

  Id square(Id a) { return mul(a, a); }

  void backward(Id root) {
    if (nodes_[check(root)].value.size() != 1) {
      throw NumericalError("backward: root must be a scalar");
    }
    for (auto& n : nodes_) {
      if (n.requires_grad) {
        n.grad = Mat<S>::zeros(n.value.rows, n.value.cols);
      }
    }
    nodes_[root].grad(0, 0) = S(1);
    for (Id id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.requires_grad && n.backprop) n.backprop(id);
    }
  }

 private:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    bool requires_grad = false;
    std::function<void(Id)> backprop;
  };

  std::vector<Node> nodes_;

  Id check(Id id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      throw NumericalError("tape: bad node id");
    }
    return id;
  }

  Id push(Mat<S> value, bool requires_grad, std::function<void(Id)> bp) {
    nodes_.push_back(
        {std::move(value), {}, requires_grad,
         requires_grad ? std::move(bp) : std::function<void(Id)>{}});
    return static_cast<Id>(nodes_.size() - 1);
  }

  void same_shape(Id a, Id b, const char* op) const {
    if (nodes_[check(a)].value.rows != nodes_[check(b)].value.rows ||
        nodes_[a].value.cols != nodes_[b].value.cols) {
      throw NumericalError(std::string(op) + ": shape mismatch");
    }
  }

  template <class F>
  Id unary_or_binary(Mat<S> out, Id a, Id b, F&& bp) {
    const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
    return push(std::move(out), rg,
                [bp = std::forward<F>(bp), a, b](Id y) mutable { bp(y, a, b); });
  }

  static void mat3_mul(const S* a, const S* b, S* c) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        c[i * 3 + j] = a[i * 3] * b[j] + a[i * 3 + 1] * b[3 + j] +
                       a[i * 3 + 2] * b[6 + j];
      }
    }
  }

  // Rz, Ry, Rx and (optionally) their derivatives wrt angle.
  static void basis_rotations(S z, S y, S x, S* rz, S* ry, S* rx, S* dz, S* dy,
                              S* dx) {
    const S cz = std::cos(z), sz = std::sin(z);
    const S cy = std::cos(y), sy = std::sin(y);
    const S cx = std::cos(x), sx = std::sin(x);
    const S rz_[9] = {cz, -sz, 0, sz, cz, 0, 0, 0, 1};
    const S ry_[9] = {cy, 0, sy, 0, 1, 0, -sy, 0, cy};
    const S rx_[9] = {1, 0, 0, 0, cx, -sx, 0, sx, cx};
    std::copy(rz_, rz_ + 9, rz);
    std::copy(ry_, ry_ + 9, ry);
    std::copy(rx_, rx_ + 9, rx);
    if (dz) {
      const S dz_[9] = {-sz, -cz, 0, cz, -sz, 0, 0, 0, 0};
      const S dy_[9] = {-sy, 0, cy, 0, 0, 0, -cy, 0, -sy};
      const S dx_[9] = {0, 0, 0, 0, -sx, -cx, 0, cx, -sx};
      std::copy(dz_, dz_ + 9, dz);
      std::copy(dy_, dy_ + 9, dy);
      std::copy(dx_, dx_ + 9, dx);
    }
  }

  static Mat<S> im2col(const Mat<S>& x, const Conv2dSpec& spec) {
    const std::int64_t n = x.rows;
    const std::int64_t oh = spec.out_h(), ow = spec.out_w();
    const std::int64_t omap = oh * ow;
    const std::int64_t patch =
        static_cast<std::int64_t>(spec.in_ch) * spec.kernel * spec.kernel;
    Mat<S> col(patch, n * omap);
    for (std::int64_t s = 0; s < n; ++s) {
      const S* xp = &x.v[s * x.cols];
      for (int c = 0; c < spec.in_ch; ++c) {
        for (int ky = 0; ky < spec.kernel; ++ky) {
          for (int kx = 0; kx < spec.kernel; ++kx) {
            const std::int64_t prow =
                (static_cast<std::int64_t>(c) * spec.kernel + ky) *
                    spec.kernel + kx;
            S* crow = &col.v[prow * col.cols + s * omap];
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const int iy = static_cast<int>(oy) * spec.stride - spec.pad + ky;
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const int ix = static_cast<int>(ox) * spec.stride - spec.pad +
                               kx;
                S val = 0;
                if (iy >= 0 && iy < spec.in_h && ix >= 0 && ix < spec.in_w) {
                  val = xp[(static_cast<std::int64_t>(c) * spec.in_h + iy) *
                               spec.in_w + ix];
                }
                crow[oy * ow + ox] = val;
              }
            }
          }
        }
      }
    }
    return col;
  }

  static void col2im_add(const Mat<S>& gcol, const Conv2dSpec& spec,
                         Mat<S>& gx) {
    const std::int64_t n = gx.rows;
    const std::int64_t oh = spec.out_h(), ow = spec.out_w();
    const std::int64_t omap = oh * ow;
    for (std::int64_t s = 0; s < n; ++s) {
      S* gp = &gx.v[s * gx.cols];
      for (int c = 0; c < spec.in_ch; ++c) {
        for (int ky = 0; ky < spec.kernel; ++ky) {
          for (int kx = 0; kx < spec.kernel; ++kx) {
            const std::int64_t prow =
                (static_cast<std::int64_t>(c) * spec.kernel + ky) *
                    spec.kernel + kx;
            const S* crow = &gcol.v[prow * gcol.cols + s * omap];
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const int iy = static_cast<int>(oy) * spec.stride - spec.pad + ky;
              if (iy < 0 || iy >= spec.in_h) continue;
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const int ix = static_cast<int>(ox) * spec.stride - spec.pad +
                               kx;
                if (ix < 0 || ix >= spec.in_w) continue;
                gp[(static_cast<std::int64_t>(c) * spec.in_h + iy) *
                       spec.in_w + ix] += crow[oy * ow + ox];
              }
            }
          }
        }
      }
    }
  }

  template <class F>
  static void pool_loop(int channels, int h, int w, int grid, F&& f) {
    for (int c = 0; c < channels; ++c) {
      for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
          const int y0 = gy * h / grid, y1 = (gy + 1) * h / grid;
          const int x0 = gx * w / grid, x1 = (gx + 1) * w / grid;
          f(c, gy, gx, y0, y1, x0, x1);
        }
      }
    }
  }
};

}  // namespace freescan::nn

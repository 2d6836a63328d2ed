#pragma once

#include <algorithm>
#include <cblas.h>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>

#include "dart3d/tensor.hpp"

namespace dart3d::nn {

// Reverse-mode autodiff over Tensor values. A graph is built per forward
// pass and discarded after backward(); weights enter as leaf nodes whose
// grads are read out by the optimizer.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand during backward()
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;

    double scalar() const {
        assert(value.numel() == 1);
        return value.data[0];
    }
};

inline Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return n;
}

inline Var leaf(Tensor t, bool requires_grad = true) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    return n;
}

inline Tensor& grad_of(Node& n) {
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

namespace detail {

inline Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace detail

inline void backward(const Var& root) {
    if (root->value.numel() != 1)
        throw std::invalid_argument("backward: root must be a scalar");
    if (!root->requires_grad) return;

    // post-order DFS over the requires_grad subgraph
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    grad_of(*root).fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.data.empty()) n->backprop(*n);
    }
}

// ---- elementwise ----

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                    " vs " + b->value.shape_str());
}

inline Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return detail::make_op(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) {
            Tensor& ga = grad_of(*a);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += self.grad[i];
        }
        if (b->requires_grad) {
            Tensor& gb = grad_of(*b);
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += self.grad[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return detail::make_op(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) {
            Tensor& ga = grad_of(*a);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += self.grad[i];
        }
        if (b->requires_grad) {
            Tensor& gb = grad_of(*b);
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] -= self.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return detail::make_op(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) {
            Tensor& ga = grad_of(*a);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += self.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            Tensor& gb = grad_of(*b);
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += self.grad[i] * a->value[i];
        }
    });
}

inline Var div(const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] /= b->value[i];
    return detail::make_op(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) {
            Tensor& ga = grad_of(*a);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += self.grad[i] / b->value[i];
        }
        if (b->requires_grad) {
            Tensor& gb = grad_of(*b);
            for (int64_t i = 0; i < gb.numel(); ++i)
                gb[i] -= self.grad[i] * a->value[i] / (b->value[i] * b->value[i]);
        }
    });
}

/// y = scale*x + shift, elementwise with scalar coefficients
inline Var affine(const Var& x, double scale, double shift) {
    Tensor out = x->value;
    for (auto& v : out.data) v = scale * v + shift;
    return detail::make_op(std::move(out), {x}, [x, scale](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += scale * self.grad[i];
    });
}

/// ca*a + cb*b
inline Var linear_comb(const Var& a, const Var& b, double ca, double cb) {
    check_same_shape(a, b, "linear_comb");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = ca * out[i] + cb * b->value[i];
    return detail::make_op(std::move(out), {a, b}, [a, b, ca, cb](Node& self) {
        if (a->requires_grad) {
            Tensor& ga = grad_of(*a);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += ca * self.grad[i];
        }
        if (b->requires_grad) {
            Tensor& gb = grad_of(*b);
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += cb * self.grad[i];
        }
    });
}

inline Var abs_(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = std::fabs(v);
    return detail::make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int64_t i = 0; i < gx.numel(); ++i) {
            double v = x->value[i];
            double s = (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            gx[i] += s * self.grad[i];
        }
    });
}

inline Var log_(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = std::log(v);
    return detail::make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i] / x->value[i];
    });
}

inline Var exp_(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = std::exp(v);
    return detail::make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += self.value[i] * self.grad[i];
    });
}

inline Var sqrt_(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = std::sqrt(v);
    return detail::make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int64_t i = 0; i < gx.numel(); ++i) {
            double y = self.value[i];
            gx[i] += (y > 0.0) ? self.grad[i] / (2.0 * y) : 0.0;
        }
    });
}

inline Var sigmoid_(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return detail::make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int64_t i = 0; i < gx.numel(); ++i) {
            double s = self.value[i];
            gx[i] += s * (1.0 - s) * self.grad[i];
        }
    });
}

inline Var relu_(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = std::max(0.0, v);
    return detail::make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int64_t i = 0; i < gx.numel(); ++i)
            if (x->value[i] > 0.0) gx[i] += self.grad[i];
    });
}

/// clamp to [lo,hi]; zero gradient outside the open interval
inline Var clamp_(const Var& x, double lo, double hi) {
    Tensor out = x->value;
    for (auto& v : out.data) v = std::min(hi, std::max(lo, v));
    return detail::make_op(std::move(out), {x}, [x, lo, hi](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int64_t i = 0; i < gx.numel(); ++i) {
            double v = x->value[i];
            if (v > lo && v < hi) gx[i] += self.grad[i];
        }
    });
}

inline Var maximum(const Var& a, const Var& b) {
    check_same_shape(a, b, "maximum");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], b->value[i]);
    return detail::make_op(std::move(out), {a, b}, [a, b](Node& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            // ties route to a
            if (a->value[i] >= b->value[i]) {
                if (a->requires_grad) grad_of(*a)[i] += self.grad[i];
            } else if (b->requires_grad) {
                grad_of(*b)[i] += self.grad[i];
            }
        }
    });
}

inline Var minimum(const Var& a, const Var& b) {
    check_same_shape(a, b, "minimum");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(out[i], b->value[i]);
    return detail::make_op(std::move(out), {a, b}, [a, b](Node& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            if (a->value[i] <= b->value[i]) {
                if (a->requires_grad) grad_of(*a)[i] += self.grad[i];
            } else if (b->requires_grad) {
                grad_of(*b)[i] += self.grad[i];
            }
        }
    });
}

// ---- reductions ----

inline Var sum_all(const Var& x) {
    double s = 0.0;
    for (double v : x->value.data) s += v;
    return detail::make_op(Tensor::scalar(s), {x}, [x](Node& self) {
        Tensor& gx = grad_of(*x);
        double g = self.grad[0];
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

inline Var mean_all(const Var& x) {
    return affine(sum_all(x), 1.0 / static_cast<double>(x->value.numel()), 0.0);
}

/// sum_i w[i]*x[i] with constant weights
inline Var weighted_sum(const Var& x, Tensor w) {
    if (!x->value.same_shape(w)) throw std::invalid_argument("weighted_sum: shape mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < w.numel(); ++i) s += w[i] * x->value[i];
    auto wp = std::make_shared<Tensor>(std::move(w));
    return detail::make_op(Tensor::scalar(s), {x}, [x, wp](Node& self) {
        Tensor& gx = grad_of(*x);
        double g = self.grad[0];
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g * (*wp)[i];
    });
}

// ---- shape / indexing ----

/// rows of a [N,K] matrix restricted to columns [c0,c1)
inline Var slice_cols(const Var& x, int c0, int c1) {
    assert(x->value.ndim() == 2);
    int n = x->value.dim(0), k = x->value.dim(1);
    assert(0 <= c0 && c0 < c1 && c1 <= k);
    Tensor out({n, c1 - c0});
    for (int i = 0; i < n; ++i)
        for (int j = c0; j < c1; ++j) out.at(i, j - c0) = x->value.at(i, j);
    return detail::make_op(std::move(out), {x}, [x, c0, c1, n](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int i = 0; i < n; ++i)
            for (int j = c0; j < c1; ++j) gx.at(i, j) += self.grad.at(i, j - c0);
    });
}

/// single column as a vector [N]
inline Var slice_col(const Var& x, int c) {
    assert(x->value.ndim() == 2);
    int n = x->value.dim(0);
    Tensor out({n});
    for (int i = 0; i < n; ++i) out[i] = x->value.at(i, c);
    return detail::make_op(std::move(out), {x}, [x, c, n](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int i = 0; i < n; ++i) gx.at(i, c) += self.grad[i];
    });
}

/// out[i] = x[i, idx[i]]
inline Var gather_index(const Var& x, std::vector<int> idx) {
    assert(x->value.ndim() == 2);
    int n = x->value.dim(0);
    assert(static_cast<int>(idx.size()) == n);
    Tensor out({n});
    for (int i = 0; i < n; ++i) out[i] = x->value.at(i, idx[i]);
    auto ip = std::make_shared<std::vector<int>>(std::move(idx));
    return detail::make_op(std::move(out), {x}, [x, ip, n](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int i = 0; i < n; ++i) gx.at(i, (*ip)[i]) += self.grad[i];
    });
}

/// per-cell feature vectors: x [C,H,W], cells {(y,x)} -> [N,C]
inline Var gather_cells(const Var& x, std::vector<std::pair<int, int>> cells) {
    assert(x->value.ndim() == 3);
    int c = x->value.dim(0);
    int n = static_cast<int>(cells.size());
    Tensor out({n, c});
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) out.at(i, ch) = x->value.at(ch, cells[i].first, cells[i].second);
    auto cp = std::make_shared<std::vector<std::pair<int, int>>>(std::move(cells));
    return detail::make_op(std::move(out), {x}, [x, cp, c, n](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch)
                gx.at(ch, (*cp)[i].first, (*cp)[i].second) += self.grad.at(i, ch);
    });
}

inline Var reshape(const Var& x, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != x->value.numel())
        throw std::invalid_argument("reshape: numel mismatch");
    Tensor out = x->value;
    out.shape = shape;
    return detail::make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i];
    });
}

/// per-channel normalization of a [C,H,W] map: y = (x - shift[c]) * scale[c]
inline Var channel_affine(const Var& x, std::vector<double> shift, std::vector<double> scale) {
    assert(x->value.ndim() == 3);
    int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    assert(static_cast<int>(shift.size()) == c && static_cast<int>(scale.size()) == c);
    Tensor out = x->value;
    for (int ch = 0; ch < c; ++ch) {
        double* p = out.data.data() + static_cast<size_t>(ch) * h * w;
        for (int i = 0; i < h * w; ++i) p[i] = (p[i] - shift[ch]) * scale[ch];
    }
    auto sp = std::make_shared<std::vector<double>>(std::move(scale));
    return detail::make_op(std::move(out), {x}, [x, sp, c, h, w](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int ch = 0; ch < c; ++ch) {
            const double* g = self.grad.data.data() + static_cast<size_t>(ch) * h * w;
            double* dst = gx.data.data() + static_cast<size_t>(ch) * h * w;
            for (int i = 0; i < h * w; ++i) dst[i] += g[i] * (*sp)[ch];
        }
    });
}

// ---- dense / conv ----

/// y[n,m] = sum_k x[n,k] * w[m,k] + b[m]
inline Var linear(const Var& x, const Var& w, const Var& b) {
    assert(x->value.ndim() == 2 && w->value.ndim() == 2 && b->value.ndim() == 1);
    int n = x->value.dim(0), k = x->value.dim(1), m = w->value.dim(0);
    assert(w->value.dim(1) == k && b->value.dim(0) == m);
    Tensor out({n, m});
    detail::gemm(false, true, n, m, k, 1.0, x->value.data.data(), k, w->value.data.data(), k, 0.0,
                 out.data.data(), m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) += b->value[j];
    return detail::make_op(std::move(out), {x, w, b}, [x, w, b, n, k, m](Node& self) {
        if (x->requires_grad) {
            Tensor& gx = grad_of(*x);
            detail::gemm(false, false, n, k, m, 1.0, self.grad.data.data(), m,
                         w->value.data.data(), k, 1.0, gx.data.data(), k);
        }
        if (w->requires_grad) {
            Tensor& gw = grad_of(*w);
            detail::gemm(true, false, m, k, n, 1.0, self.grad.data.data(), m,
                         x->value.data.data(), k, 1.0, gw.data.data(), k);
        }
        if (b->requires_grad) {
            Tensor& gb = grad_of(*b);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) gb[j] += self.grad.at(i, j);
        }
    });
}

namespace detail {

inline void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int oh, int ow,
                   Tensor& col) {
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    // col: [c*kh*kw, oh*ow]
    int64_t l = static_cast<int64_t>(oh) * ow;
    for (int ch = 0; ch < c; ++ch)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                double* dst = col.data.data() + (static_cast<size_t>(ch) * kh * kw + ky * kw + kx) * l;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst + static_cast<size_t>(oy) * ow,
                                  dst + static_cast<size_t>(oy + 1) * ow, 0.0);
                        continue;
                    }
                    const double* src = x.data.data() + (static_cast<size_t>(ch) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + kx - pad;
                        dst[static_cast<size_t>(oy) * ow + ox] =
                            (ix >= 0 && ix < w) ? src[ix] : 0.0;
                    }
                }
            }
}

inline void col2im_accum(const Tensor& col, int c, int h, int w, int kh, int kw, int stride,
                         int pad, int oh, int ow, Tensor& gx) {
    int64_t l = static_cast<int64_t>(oh) * ow;
    for (int ch = 0; ch < c; ++ch)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const double* src =
                    col.data.data() + (static_cast<size_t>(ch) * kh * kw + ky * kw + kx) * l;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    double* dst = gx.data.data() + (static_cast<size_t>(ch) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += src[static_cast<size_t>(oy) * ow + ox];
                    }
                }
            }
}

}  // namespace detail

/// 2-D convolution, single image: x [Cin,H,W], w [Cout,Cin,kh,kw], b [Cout]
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1, int pad = 1) {
    assert(x->value.ndim() == 3 && w->value.ndim() == 4 && b->value.ndim() == 1);
    int cin = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
    int cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    if (w->value.dim(1) != cin)
        throw std::invalid_argument("conv2d: channel mismatch");
    int oh = (h + 2 * pad - kh) / stride + 1;
    int ow = (wd + 2 * pad - kw) / stride + 1;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");

    int k = cin * kh * kw;
    int64_t l = static_cast<int64_t>(oh) * ow;
    auto col = std::make_shared<Tensor>(Tensor({k, static_cast<int>(l)}));
    detail::im2col(x->value, kh, kw, stride, pad, oh, ow, *col);

    Tensor out({cout, oh, ow});
    detail::gemm(false, false, cout, static_cast<int>(l), k, 1.0, w->value.data.data(), k,
                 col->data.data(), static_cast<int>(l), 0.0, out.data.data(),
                 static_cast<int>(l));
    for (int co = 0; co < cout; ++co) {
        double* p = out.data.data() + static_cast<size_t>(co) * l;
        double bv = b->value[co];
        for (int64_t i = 0; i < l; ++i) p[i] += bv;
    }

    return detail::make_op(
        std::move(out), {x, w, b},
        [x, w, b, col, cin, h, wd, cout, kh, kw, stride, pad, oh, ow, k, l](Node& self) {
            const double* dy = self.grad.data.data();  // [cout, l]
            if (b->requires_grad) {
                Tensor& gb = grad_of(*b);
                for (int co = 0; co < cout; ++co) {
                    double s = 0.0;
                    const double* p = dy + static_cast<size_t>(co) * l;
                    for (int64_t i = 0; i < l; ++i) s += p[i];
                    gb[co] += s;
                }
            }
            if (w->requires_grad) {
                Tensor& gw = grad_of(*w);
                detail::gemm(false, true, cout, k, static_cast<int>(l), 1.0, dy,
                             static_cast<int>(l), col->data.data(), static_cast<int>(l), 1.0,
                             gw.data.data(), k);
            }
            if (x->requires_grad) {
                Tensor dcol({k, static_cast<int>(l)});
                detail::gemm(true, false, k, static_cast<int>(l), cout, 1.0,
                             w->value.data.data(), k, dy, static_cast<int>(l), 0.0,
                             dcol.data.data(), static_cast<int>(l));
                Tensor& gx = grad_of(*x);
                detail::col2im_accum(dcol, cin, h, wd, kh, kw, stride, pad, oh, ow, gx);
            }
        });
}

// ---- RoIAlign ----

struct RoiRect {
    double left = 0, top = 0, right = 0, bottom = 0;
};

/// Bilinear crop of x [C,H,W] to [N,C,S,S], one sample per output cell center.
/// Samples falling outside the map read zeros (zero-padded semantics).
inline Var roi_align(const Var& x, std::vector<RoiRect> rois, int out_size) {
    assert(x->value.ndim() == 3);
    int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    int n = static_cast<int>(rois.size());
    int s = out_size;
    for (const auto& r : rois)
        if (!(r.right > r.left) || !(r.bottom > r.top))
            throw std::invalid_argument("roi_align: degenerate roi");

    Tensor out({n, c, s, s});
    auto sample = [&](const Tensor& src, int ch, double sy, double sx) -> double {
        int y0 = static_cast<int>(std::floor(sy));
        int x0 = static_cast<int>(std::floor(sx));
        double fy = sy - y0, fx = sx - x0;
        double v = 0.0;
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                int yy = y0 + dy, xx = x0 + dx;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                double wgt = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
                v += wgt * src.at(ch, yy, xx);
            }
        return v;
    };

    for (int i = 0; i < n; ++i) {
        const auto& r = rois[i];
        double bh = (r.bottom - r.top) / s, bw = (r.right - r.left) / s;
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < s; ++oy)
                for (int ox = 0; ox < s; ++ox) {
                    double sy = r.top + (oy + 0.5) * bh - 0.5;
                    double sx = r.left + (ox + 0.5) * bw - 0.5;
                    out.at(i, ch, oy, ox) = sample(x->value, ch, sy, sx);
                }
    }

    auto rp = std::make_shared<std::vector<RoiRect>>(std::move(rois));
    return detail::make_op(std::move(out), {x}, [x, rp, c, h, w, s, n](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int i = 0; i < n; ++i) {
            const auto& r = (*rp)[i];
            double bh = (r.bottom - r.top) / s, bw = (r.right - r.left) / s;
            for (int ch = 0; ch < c; ++ch)
                for (int oy = 0; oy < s; ++oy)
                    for (int ox = 0; ox < s; ++ox) {
                        double g = self.grad.at(i, ch, oy, ox);
                        if (g == 0.0) continue;
                        double sy = r.top + (oy + 0.5) * bh - 0.5;
                        double sx = r.left + (ox + 0.5) * bw - 0.5;
                        int y0 = static_cast<int>(std::floor(sy));
                        int x0 = static_cast<int>(std::floor(sx));
                        double fy = sy - y0, fx = sx - x0;
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                int yy = y0 + dy, xx = x0 + dx;
                                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                                double wgt = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
                                gx.at(ch, yy, xx) += wgt * g;
                            }
                    }
        }
    });
}

// ---- softmax ----

/// row-wise log-softmax of [N,K]
inline Var log_softmax(const Var& x) {
    assert(x->value.ndim() == 2);
    int n = x->value.dim(0), k = x->value.dim(1);
    Tensor out({n, k});
    for (int i = 0; i < n; ++i) {
        double mx = -1e300;
        for (int j = 0; j < k; ++j) mx = std::max(mx, x->value.at(i, j));
        double lse = 0.0;
        for (int j = 0; j < k; ++j) lse += std::exp(x->value.at(i, j) - mx);
        lse = mx + std::log(lse);
        for (int j = 0; j < k; ++j) out.at(i, j) = x->value.at(i, j) - lse;
    }
    return detail::make_op(std::move(out), {x}, [x, n, k](Node& self) {
        Tensor& gx = grad_of(*x);
        for (int i = 0; i < n; ++i) {
            double gsum = 0.0;
            for (int j = 0; j < k; ++j) gsum += self.grad.at(i, j);
            for (int j = 0; j < k; ++j)
                gx.at(i, j) += self.grad.at(i, j) - std::exp(self.value.at(i, j)) * gsum;
        }
    });
}

}  // namespace dart3d::nn

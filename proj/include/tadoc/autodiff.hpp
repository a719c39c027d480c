#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "tadoc/parallel.hpp"

namespace tadoc::ad {

/*
Reverse-mode tape over dense tensors. Production code instantiates S = float;
gradient tests instantiate S = double (the "shadow" evaluation). Graphs are
built define-by-run: each op returns a Tensor whose node retains its parents
and a pullback that accumulates into the parents' grad buffers. backward()
visits every reachable node exactly once, in reverse topological order.

Feature maps are laid out [C, H, W]; convolution weights [OC, IC, KH, KW].
*/

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

template <class S>
class Tensor;

template <class S>
struct Node {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    std::string name;  // parameters only
    std::vector<Tensor<S>> parents;
    std::function<void(Node<S>&)> pullback;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    }
};

template <class S>
class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<S> values, bool requires_grad = false) {
        if (shape_numel(shape) != values.size())
            throw std::invalid_argument("Tensor: shape/value size mismatch");
        Tensor t;
        t.node_ = std::make_shared<Node<S>>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(values);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<S> v(shape_numel(shape), S(0));
        return from(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor scalar(S v) { return from({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->value.size(); }
    std::vector<S>& value() { return node_->value; }
    const std::vector<S>& value() const { return node_->value; }
    std::vector<S>& grad() { return node_->grad; }
    const std::vector<S>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::string& name() const { return node_->name; }
    void set_name(std::string n) { node_->name = std::move(n); }

    S item() const {
        if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar");
        return node_->value[0];
    }

    void zero_grad() {
        if (node_) node_->grad.assign(node_->value.size(), S(0));
    }

    std::shared_ptr<Node<S>>& node() { return node_; }
    const std::shared_ptr<Node<S>>& node() const { return node_; }

    // Reverse pass from a scalar root. Accumulates into grads; call
    // zero_grad on the parameters between optimizer steps.
    void backward() {
        if (numel() != 1) throw std::invalid_argument("backward(): root must be scalar");
        std::vector<Node<S>*> order;
        std::unordered_set<Node<S>*> seen;
        std::vector<std::pair<Node<S>*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node<S>* p = n->parents[idx].node().get();
                ++idx;
                if (p && p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->ensure_grad();
        node_->grad[0] += S(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<S>* n = *it;
            if (n->pullback) n->pullback(*n);
        }
    }

private:
    std::shared_ptr<Node<S>> node_;
};

namespace detail {

// Dot product with sixteen fixed-order partial accumulators. The combine
// order never depends on data or thread count, so results stay
// bit-deterministic, and the lane loop maps onto one 512-bit vector op.
template <class S>
inline S dot_lanes(const S* a, const S* b, int n) {
    S acc[16] = {};
    int i = 0;
    for (; i + 16 <= n; i += 16)
        for (int k = 0; k < 16; ++k) acc[k] += a[i + k] * b[i + k];
    S total = S(0);
    for (int k = 0; k < 16; ++k) total += acc[k];
    for (; i < n; ++i) total += a[i] * b[i];
    return total;
}

template <class S>
Tensor<S> make_op(Shape shape, std::vector<S> value, std::vector<Tensor<S>> parents,
                  std::function<void(Node<S>&)> pullback) {
    bool needs = false;
    for (const auto& p : parents)
        if (p.defined() && p.requires_grad()) needs = true;
    Tensor<S> out = Tensor<S>::from(std::move(shape), std::move(value), needs);
    if (needs) {
        out.node()->parents = std::move(parents);
        out.node()->pullback = std::move(pullback);
    }
    return out;
}

inline int conv_out_dim(int in, int k, int stride, int dilation, int padding) {
    return (in + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
}

inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

}  // namespace detail

// ---------------------------------------------------------------------------
// convolution (cross-correlation semantics)

template <class S>
void conv2d_forward_raw(const S* in, int IC, int H, int W, const S* w, int OC, int KH, int KW,
                        const S* bias, int stride, int dilation, int padding, S* out, int OH,
                        int OW) {
    parallel_for(
        OC,
        [&](std::int64_t oc0, std::int64_t oc1) {
            for (std::int64_t oc = oc0; oc < oc1; ++oc) {
                S* plane = out + oc * OH * OW;
                S b = bias ? bias[oc] : S(0);
                std::fill(plane, plane + OH * OW, b);
                for (int ic = 0; ic < IC; ++ic) {
                    const S* in_ch = in + static_cast<std::size_t>(ic) * H * W;
                    for (int ky = 0; ky < KH; ++ky) {
                        for (int kx = 0; kx < KW; ++kx) {
                            S wv = w[((oc * IC + ic) * KH + ky) * KW + kx];
                            int off = kx * dilation - padding;
                            int ox0 = std::max(0, detail::ceil_div(-off, stride));
                            int ox1 = std::min(OW, detail::ceil_div(W - off, stride));
                            if (ox0 >= ox1) continue;
                            for (int oy = 0; oy < OH; ++oy) {
                                int iy = oy * stride + ky * dilation - padding;
                                if (iy < 0 || iy >= H) continue;
                                const S* in_row = in_ch + static_cast<std::size_t>(iy) * W;
                                S* out_row = plane + static_cast<std::size_t>(oy) * OW;
                                if (stride == 1) {
                                    const S* ip = in_row + off;
                                    for (int ox = ox0; ox < ox1; ++ox)
                                        out_row[ox] += wv * ip[ox];
                                } else {
                                    for (int ox = ox0; ox < ox1; ++ox)
                                        out_row[ox] += wv * in_row[ox * stride + off];
                                }
                            }
                        }
                    }
                }
            }
        },
        1);
}

// Patch matrix: one row of IC*KH*KW input samples per output position.
// Strided and dilated taps become contiguous dot products, which is what
// makes the downsampling convolutions and the tiny 8x8-plane convolutions
// fast; plain stride-1 convolutions on large planes keep the direct path.
template <class S>
void im2col(const S* in, int IC, int H, int W, int KH, int KW, int stride, int dilation,
            int padding, int OH, int OW, S* col) {
    const int inner = IC * KH * KW;
    parallel_for(
        OH,
        [&](std::int64_t y0, std::int64_t y1) {
            for (std::int64_t oy = y0; oy < y1; ++oy) {
                S* row = col + oy * OW * inner;
                for (int ox = 0; ox < OW; ++ox, row += inner) {
                    int k = 0;
                    for (int ic = 0; ic < IC; ++ic) {
                        const S* in_ch = in + static_cast<std::size_t>(ic) * H * W;
                        for (int ky = 0; ky < KH; ++ky) {
                            int iy = static_cast<int>(oy) * stride + ky * dilation - padding;
                            for (int kx = 0; kx < KW; ++kx, ++k) {
                                int ix = ox * stride + kx * dilation - padding;
                                row[k] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                             ? in_ch[static_cast<std::size_t>(iy) * W + ix]
                                             : S(0);
                            }
                        }
                    }
                }
            }
        },
        8);
}

template <class S>
bool conv_use_im2col(int stride, int out_hw) {
    return stride != 1 || out_hw <= 1024;
}

template <class S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                 int stride = 1, int dilation = 1, int padding = 0) {
    const Shape& is = input.shape();
    const Shape& ws = weight.shape();
    if (is.size() != 3 || ws.size() != 4)
        throw std::invalid_argument("conv2d: input must be [C,H,W], weight [OC,IC,KH,KW]");
    int IC = is[0], H = is[1], W = is[2];
    int OC = ws[0], KH = ws[2], KW = ws[3];
    if (ws[1] != IC)
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(ws[1]) +
                                    " input channels, got " + std::to_string(IC));
    if (bias.defined() && (bias.shape().size() != 1 || bias.shape()[0] != OC))
        throw std::invalid_argument("conv2d: bias shape mismatch");
    int OH = detail::conv_out_dim(H, KH, stride, dilation, padding);
    int OW = detail::conv_out_dim(W, KW, stride, dilation, padding);
    if (OH < 1 || OW < 1) throw std::invalid_argument("conv2d: empty output");

    const bool use_col = conv_use_im2col<S>(stride, OH * OW);
    std::vector<S> out(static_cast<std::size_t>(OC) * OH * OW);
    if (use_col) {
        const int inner = IC * KH * KW;
        std::vector<S> col(static_cast<std::size_t>(OH) * OW * inner);
        im2col(input.value().data(), IC, H, W, KH, KW, stride, dilation, padding, OH, OW,
               col.data());
        const S* wdat = weight.value().data();
        const S* bdat = bias.defined() ? bias.value().data() : nullptr;
        parallel_for(
            OC,
            [&](std::int64_t c0, std::int64_t c1) {
                for (std::int64_t oc = c0; oc < c1; ++oc) {
                    const S* wrow = wdat + oc * inner;
                    S* orow = out.data() + oc * OH * OW;
                    S b = bdat ? bdat[oc] : S(0);
                    const S* crow = col.data();
                    for (int p = 0; p < OH * OW; ++p, crow += inner)
                        orow[p] = b + detail::dot_lanes(wrow, crow, inner);
                }
            },
            1);
    } else {
        conv2d_forward_raw(input.value().data(), IC, H, W, weight.value().data(), OC, KH, KW,
                           bias.defined() ? bias.value().data() : nullptr, stride, dilation,
                           padding, out.data(), OH, OW);
    }

    std::vector<Tensor<S>> parents{input, weight};
    if (bias.defined()) parents.push_back(bias);
    auto pb_col = [stride, dilation, padding, IC, H, W, OC, KH, KW, OH, OW](Node<S>& self) {
        const int inner = IC * KH * KW;
        const S* g = self.grad.data();
        Tensor<S> input_p = self.parents[0];
        Tensor<S> weight_p = self.parents[1];
        std::vector<S> col(static_cast<std::size_t>(OH) * OW * inner);
        im2col(input_p.value().data(), IC, H, W, KH, KW, stride, dilation, padding, OH, OW,
               col.data());
        if (weight_p.requires_grad()) {
            weight_p.node()->ensure_grad();
            S* gw = weight_p.grad().data();
            parallel_for(
                OC,
                [&](std::int64_t c0, std::int64_t c1) {
                    for (std::int64_t oc = c0; oc < c1; ++oc) {
                        S* gwrow = gw + oc * inner;
                        const S* grow = g + oc * OH * OW;
                        const S* crow = col.data();
                        for (int p = 0; p < OH * OW; ++p, crow += inner) {
                            S gv = grow[p];
                            if (gv == S(0)) continue;
                            for (int k = 0; k < inner; ++k) gwrow[k] += gv * crow[k];
                        }
                    }
                },
                1);
        }
        if (input_p.requires_grad()) {
            input_p.node()->ensure_grad();
            S* gin = input_p.grad().data();
            const S* wdat = weight_p.value().data();
            // gcol[p][k] = sum_oc g[oc][p] * w[oc][k], then col2im scatter
            std::vector<S> gcol(static_cast<std::size_t>(OH) * OW * inner, S(0));
            parallel_for(
                OH * OW,
                [&](std::int64_t p0, std::int64_t p1) {
                    for (std::int64_t p = p0; p < p1; ++p) {
                        S* crow = gcol.data() + p * inner;
                        for (int oc = 0; oc < OC; ++oc) {
                            S gv = g[static_cast<std::size_t>(oc) * OH * OW + p];
                            if (gv == S(0)) continue;
                            const S* wrow = wdat + static_cast<std::size_t>(oc) * inner;
                            for (int k = 0; k < inner; ++k) crow[k] += gv * wrow[k];
                        }
                    }
                },
                64);
            parallel_for(
                IC,
                [&](std::int64_t ic0, std::int64_t ic1) {
                    for (std::int64_t ic = ic0; ic < ic1; ++ic) {
                        S* gin_ch = gin + ic * H * W;
                        for (int oy = 0; oy < OH; ++oy)
                            for (int ox = 0; ox < OW; ++ox) {
                                const S* crow =
                                    gcol.data() +
                                    (static_cast<std::size_t>(oy) * OW + ox) * inner +
                                    ic * KH * KW;
                                for (int ky = 0; ky < KH; ++ky) {
                                    int iy = oy * stride + ky * dilation - padding;
                                    if (iy < 0 || iy >= H) continue;
                                    for (int kx = 0; kx < KW; ++kx) {
                                        int ix = ox * stride + kx * dilation - padding;
                                        if (ix < 0 || ix >= W) continue;
                                        gin_ch[static_cast<std::size_t>(iy) * W + ix] +=
                                            crow[ky * KW + kx];
                                    }
                                }
                            }
                    }
                },
                1);
        }
        if (self.parents.size() > 2 && self.parents[2].requires_grad()) {
            Tensor<S> bias_p = self.parents[2];
            bias_p.node()->ensure_grad();
            S* gb = bias_p.grad().data();
            for (int oc = 0; oc < OC; ++oc) {
                const S* g_ch = g + static_cast<std::size_t>(oc) * OH * OW;
                S acc = S(0);
                for (int i = 0; i < OH * OW; ++i) acc += g_ch[i];
                gb[oc] += acc;
            }
        }
    };
    auto pb = [stride, dilation, padding, IC, H, W, OC, KH, KW, OH,
               OW](Node<S>& self) {
        const S* g = self.grad.data();
        Tensor<S> input_p = self.parents[0];
        Tensor<S> weight_p = self.parents[1];
        const S* wdat = weight_p.value().data();
        if (input_p.requires_grad()) {
            input_p.node()->ensure_grad();
            S* gin = input_p.grad().data();
            parallel_for(
                IC,
                [&](std::int64_t ic0, std::int64_t ic1) {
                    for (std::int64_t ic = ic0; ic < ic1; ++ic) {
                        S* gin_ch = gin + ic * H * W;
                        for (int oc = 0; oc < OC; ++oc) {
                            const S* g_ch = g + static_cast<std::size_t>(oc) * OH * OW;
                            for (int ky = 0; ky < KH; ++ky)
                                for (int kx = 0; kx < KW; ++kx) {
                                    S wv = wdat[((oc * IC + ic) * KH + ky) * KW + kx];
                                    int off = kx * dilation - padding;
                                    int ox0 = std::max(0, detail::ceil_div(-off, stride));
                                    int ox1 = std::min(OW, detail::ceil_div(W - off, stride));
                                    if (ox0 >= ox1) continue;
                                    for (int oy = 0; oy < OH; ++oy) {
                                        int iy = oy * stride + ky * dilation - padding;
                                        if (iy < 0 || iy >= H) continue;
                                        S* gin_row = gin_ch + static_cast<std::size_t>(iy) * W;
                                        const S* g_row = g_ch + static_cast<std::size_t>(oy) * OW;
                                        if (stride == 1) {
                                            S* ip = gin_row + off;
                                            for (int ox = ox0; ox < ox1; ++ox)
                                                ip[ox] += wv * g_row[ox];
                                        } else {
                                            for (int ox = ox0; ox < ox1; ++ox)
                                                gin_row[ox * stride + off] += wv * g_row[ox];
                                        }
                                    }
                                }
                        }
                    }
                },
                1);
        }
        if (weight_p.requires_grad()) {
            weight_p.node()->ensure_grad();
            S* gw = weight_p.grad().data();
            const S* in = input_p.value().data();
            parallel_for(
                OC,
                [&](std::int64_t c0, std::int64_t c1) {
                    for (std::int64_t oc = c0; oc < c1; ++oc) {
                        const S* g_ch = g + oc * OH * OW;
                        for (int ic = 0; ic < IC; ++ic) {
                            const S* in_ch = in + static_cast<std::size_t>(ic) * H * W;
                            for (int ky = 0; ky < KH; ++ky)
                                for (int kx = 0; kx < KW; ++kx) {
                                    int off = kx * dilation - padding;
                                    int ox0 = std::max(0, detail::ceil_div(-off, stride));
                                    int ox1 = std::min(OW, detail::ceil_div(W - off, stride));
                                    S acc = S(0);
                                    if (ox0 < ox1) {
                                        for (int oy = 0; oy < OH; ++oy) {
                                            int iy = oy * stride + ky * dilation - padding;
                                            if (iy < 0 || iy >= H) continue;
                                            const S* in_row =
                                                in_ch + static_cast<std::size_t>(iy) * W;
                                            const S* g_row =
                                                g_ch + static_cast<std::size_t>(oy) * OW;
                                            if (stride == 1) {
                                                acc += detail::dot_lanes(g_row + ox0,
                                                                         in_row + off + ox0,
                                                                         ox1 - ox0);
                                            } else {
                                                for (int ox = ox0; ox < ox1; ++ox)
                                                    acc += g_row[ox] * in_row[ox * stride + off];
                                            }
                                        }
                                    }
                                    gw[((oc * IC + ic) * KH + ky) * KW + kx] += acc;
                                }
                        }
                    }
                },
                1);
        }
        if (self.parents.size() > 2 && self.parents[2].requires_grad()) {
            Tensor<S> bias_p = self.parents[2];
            bias_p.node()->ensure_grad();
            S* gb = bias_p.grad().data();
            for (int oc = 0; oc < OC; ++oc) {
                const S* g_ch = g + static_cast<std::size_t>(oc) * OH * OW;
                S acc = S(0);
                for (int i = 0; i < OH * OW; ++i) acc += g_ch[i];
                gb[oc] += acc;
            }
        }
    };
    if (use_col)
        return detail::make_op<S>({OC, OH, OW}, std::move(out), std::move(parents),
                                  std::move(pb_col));
    return detail::make_op<S>({OC, OH, OW}, std::move(out), std::move(parents), std::move(pb));
}

// ---------------------------------------------------------------------------
// elementwise & shape ops

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
    std::vector<S> v(x.numel());
    const auto& xv = x.value();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[i] > S(0) ? xv[i] : S(0);
    return detail::make_op<S>(
        x.shape(), std::move(v), {x}, [](Node<S>& self) {
            Tensor<S> xp = self.parents[0];
            xp.node()->ensure_grad();
            S* gx = xp.grad().data();
            const S* xv = xp.value().data();
            const S* g = self.grad.data();
            for (std::size_t i = 0; i < self.value.size(); ++i)
                if (xv[i] > S(0)) gx[i] += g[i];
        });
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
    std::vector<S> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + b.value()[i];
    return detail::make_op<S>(
        a.shape(), std::move(v), {a, b}, [](Node<S>& self) {
            const S* g = self.grad.data();
            for (int k = 0; k < 2; ++k) {
                Tensor<S> p = self.parents[k];
                if (!p.requires_grad()) continue;
                p.node()->ensure_grad();
                S* gp = p.grad().data();
                for (std::size_t i = 0; i < self.value.size(); ++i) gp[i] += g[i];
            }
        });
}

// y = a*x + b*c, elementwise, with compile-time-known scalars a, b.
// Used for the final-map recovery inside the loss graph.
template <class S>
Tensor<S> axpby(S a, const Tensor<S>& x, S b, const Tensor<S>& c) {
    if (x.shape() != c.shape()) throw std::invalid_argument("axpby: shape mismatch");
    std::vector<S> v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * x.value()[i] + b * c.value()[i];
    return detail::make_op<S>(
        x.shape(), std::move(v), {x, c}, [a, b](Node<S>& self) {
            const S* g = self.grad.data();
            Tensor<S> xp = self.parents[0];
            if (xp.requires_grad()) {
                xp.node()->ensure_grad();
                S* gx = xp.grad().data();
                for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += a * g[i];
            }
            Tensor<S> cp = self.parents[1];
            if (cp.requires_grad()) {
                cp.node()->ensure_grad();
                S* gc = cp.grad().data();
                for (std::size_t i = 0; i < self.value.size(); ++i) gc[i] += b * g[i];
            }
        });
}

// broadcast add of a per-channel vector over [C,H,W]
template <class S>
Tensor<S> add_channel(const Tensor<S>& x, const Tensor<S>& v) {
    const Shape& xs = x.shape();
    if (xs.size() != 3 || v.shape().size() != 1 || v.shape()[0] != xs[0])
        throw std::invalid_argument("add_channel: expects [C,H,W] and [C]");
    int C = xs[0], HW = xs[1] * xs[2];
    std::vector<S> out(x.numel());
    for (int c = 0; c < C; ++c) {
        S b = v.value()[c];
        const S* xp = x.value().data() + static_cast<std::size_t>(c) * HW;
        S* op = out.data() + static_cast<std::size_t>(c) * HW;
        for (int i = 0; i < HW; ++i) op[i] = xp[i] + b;
    }
    return detail::make_op<S>(
        x.shape(), std::move(out), {x, v}, [C, HW](Node<S>& self) {
            const S* g = self.grad.data();
            Tensor<S> xp = self.parents[0];
            if (xp.requires_grad()) {
                xp.node()->ensure_grad();
                S* gx = xp.grad().data();
                for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += g[i];
            }
            Tensor<S> vp = self.parents[1];
            if (vp.requires_grad()) {
                vp.node()->ensure_grad();
                S* gv = vp.grad().data();
                for (int c = 0; c < C; ++c) {
                    S acc = S(0);
                    const S* gp = g + static_cast<std::size_t>(c) * HW;
                    for (int i = 0; i < HW; ++i) acc += gp[i];
                    gv[c] += acc;
                }
            }
        });
}

template <class S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: empty list");
    int H = parts[0].shape()[1], W = parts[0].shape()[2];
    int C = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != 3 || p.shape()[1] != H || p.shape()[2] != W)
            throw std::invalid_argument("concat_channels: spatial dims differ");
        C += p.shape()[0];
    }
    std::vector<S> out;
    out.reserve(static_cast<std::size_t>(C) * H * W);
    for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
    std::vector<Tensor<S>> parents(parts.begin(), parts.end());
    return detail::make_op<S>(
        {C, H, W}, std::move(out), std::move(parents), [](Node<S>& self) {
            const S* g = self.grad.data();
            std::size_t off = 0;
            for (auto& p : self.parents) {
                std::size_t n = p.numel();
                if (p.requires_grad()) {
                    p.node()->ensure_grad();
                    S* gp = p.grad().data();
                    for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                }
                off += n;
            }
        });
}

// ---------------------------------------------------------------------------
// linear / normalization

template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
    if (x.shape().size() != 1 || weight.shape().size() != 2 ||
        weight.shape()[1] != x.shape()[0])
        throw std::invalid_argument("linear: expects x [IN], weight [OUT,IN]");
    int IN = x.shape()[0], OUT = weight.shape()[0];
    std::vector<S> out(OUT);
    for (int o = 0; o < OUT; ++o) {
        S acc = bias.defined() ? bias.value()[o] : S(0);
        const S* wrow = weight.value().data() + static_cast<std::size_t>(o) * IN;
        for (int i = 0; i < IN; ++i) acc += wrow[i] * x.value()[i];
        out[o] = acc;
    }
    std::vector<Tensor<S>> parents{x, weight};
    if (bias.defined()) parents.push_back(bias);
    return detail::make_op<S>(
        {OUT}, std::move(out), std::move(parents), [IN, OUT](Node<S>& self) {
            const S* g = self.grad.data();
            Tensor<S> xp = self.parents[0];
            Tensor<S> wp = self.parents[1];
            if (xp.requires_grad()) {
                xp.node()->ensure_grad();
                S* gx = xp.grad().data();
                const S* w = wp.value().data();
                for (int o = 0; o < OUT; ++o)
                    for (int i = 0; i < IN; ++i) gx[i] += g[o] * w[o * IN + i];
            }
            if (wp.requires_grad()) {
                wp.node()->ensure_grad();
                S* gw = wp.grad().data();
                const S* xv = xp.value().data();
                for (int o = 0; o < OUT; ++o)
                    for (int i = 0; i < IN; ++i) gw[o * IN + i] += g[o] * xv[i];
            }
            if (self.parents.size() > 2 && self.parents[2].requires_grad()) {
                Tensor<S> bp = self.parents[2];
                bp.node()->ensure_grad();
                for (int o = 0; o < OUT; ++o) bp.grad()[o] += g[o];
            }
        });
}

// GroupNorm over [C,H,W]; gamma/beta are optional per-channel affine tensors.
template <class S>
Tensor<S> group_norm(const Tensor<S>& x, int groups, const Tensor<S>& gamma,
                     const Tensor<S>& beta, S eps = S(1e-5)) {
    const Shape& xs = x.shape();
    if (xs.size() != 3) throw std::invalid_argument("group_norm: expects [C,H,W]");
    int C = xs[0], HW = xs[1] * xs[2];
    if (groups < 1 || C % groups != 0)
        throw std::invalid_argument("group_norm: groups must divide channels");
    int cpg = C / groups;
    std::size_t gsz = static_cast<std::size_t>(cpg) * HW;

    std::vector<S> out(x.numel());
    std::vector<S> mean(groups), inv_std(groups);
    const S* xv = x.value().data();
    for (int g = 0; g < groups; ++g) {
        const S* xg = xv + g * gsz;
        S mu = S(0);
        for (std::size_t i = 0; i < gsz; ++i) mu += xg[i];
        mu /= static_cast<S>(gsz);
        S var = S(0);
        for (std::size_t i = 0; i < gsz; ++i) {
            S d = xg[i] - mu;
            var += d * d;
        }
        var /= static_cast<S>(gsz);
        mean[g] = mu;
        inv_std[g] = S(1) / std::sqrt(var + eps);
    }
    bool affine = gamma.defined();
    for (int c = 0; c < C; ++c) {
        int g = c / cpg;
        S mu = mean[g], is = inv_std[g];
        S gm = affine ? gamma.value()[c] : S(1);
        S bt = affine ? beta.value()[c] : S(0);
        const S* xc = xv + static_cast<std::size_t>(c) * HW;
        S* oc = out.data() + static_cast<std::size_t>(c) * HW;
        for (int i = 0; i < HW; ++i) oc[i] = (xc[i] - mu) * is * gm + bt;
    }

    std::vector<Tensor<S>> parents{x};
    if (affine) {
        parents.push_back(gamma);
        parents.push_back(beta);
    }
    auto pb = [groups, cpg, HW, C, mean, inv_std, affine](Node<S>& self) {
        std::size_t gsz = static_cast<std::size_t>(cpg) * HW;
        Tensor<S> xp = self.parents[0];
        const S* xv = xp.value().data();
        const S* g = self.grad.data();
        const S* gamma_v = affine ? self.parents[1].value().data() : nullptr;

        if (affine) {
            Tensor<S> gp = self.parents[1];
            Tensor<S> bp = self.parents[2];
            if (gp.requires_grad()) {
                gp.node()->ensure_grad();
                bp.node()->ensure_grad();
                for (int c = 0; c < C; ++c) {
                    int grp = c / cpg;
                    S mu = mean[grp], is = inv_std[grp];
                    const S* xc = xv + static_cast<std::size_t>(c) * HW;
                    const S* gc = g + static_cast<std::size_t>(c) * HW;
                    S dg = S(0), db = S(0);
                    for (int i = 0; i < HW; ++i) {
                        dg += gc[i] * (xc[i] - mu) * is;
                        db += gc[i];
                    }
                    gp.grad()[c] += dg;
                    bp.grad()[c] += db;
                }
            }
        }
        if (xp.requires_grad()) {
            xp.node()->ensure_grad();
            S* gx = xp.grad().data();
            for (int grp = 0; grp < groups; ++grp) {
                S mu = mean[grp], is = inv_std[grp];
                const S* xg = xv + grp * gsz;
                const S* gg = g + grp * gsz;
                // dxhat folded with gamma; means over the group
                S sum_d = S(0), sum_dx = S(0);
                for (std::size_t i = 0; i < gsz; ++i) {
                    int c = grp * cpg + static_cast<int>(i) / HW;
                    S gm = gamma_v ? gamma_v[c] : S(1);
                    S d = gg[i] * gm;
                    S xh = (xg[i] - mu) * is;
                    sum_d += d;
                    sum_dx += d * xh;
                }
                S inv_n = S(1) / static_cast<S>(gsz);
                for (std::size_t i = 0; i < gsz; ++i) {
                    int c = grp * cpg + static_cast<int>(i) / HW;
                    S gm = gamma_v ? gamma_v[c] : S(1);
                    S d = gg[i] * gm;
                    S xh = (xg[i] - mu) * is;
                    gx[grp * gsz + i] += is * (d - inv_n * sum_d - xh * inv_n * sum_dx);
                }
            }
        }
    };
    return detail::make_op<S>(x.shape(), std::move(out), std::move(parents), std::move(pb));
}

// ---------------------------------------------------------------------------
// sampling ops

// Bilinear resize of [C,h,w] to [C,H,W] with pixel-center alignment and
// linear border extrapolation, so affine fields survive exactly (this is the
// differentiable twin of upsample_map_bilinear).
template <class S>
Tensor<S> upsample_bilinear(const Tensor<S>& x, int out_h, int out_w) {
    const Shape& xs = x.shape();
    if (xs.size() != 3) throw std::invalid_argument("upsample_bilinear: expects [C,h,w]");
    int C = xs[0], h = xs[1], w = xs[2];
    if (out_h < h || out_w < w)
        throw std::invalid_argument("upsample_bilinear: output smaller than input");
    struct Tap {
        int i0, i1;
        S w1;  // weight of i1; may leave [0,1] at borders
    };
    std::vector<Tap> ty(out_h), tx(out_w);
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double p = (y + 0.5) * sy - 0.5;
        int i0 = std::clamp(static_cast<int>(std::floor(p)), 0, std::max(h - 2, 0));
        ty[y] = {i0, std::min(i0 + 1, h - 1), static_cast<S>(p - i0)};
    }
    for (int x = 0; x < out_w; ++x) {
        double p = (x + 0.5) * sx - 0.5;
        int i0 = std::clamp(static_cast<int>(std::floor(p)), 0, std::max(w - 2, 0));
        tx[x] = {i0, std::min(i0 + 1, w - 1), static_cast<S>(p - i0)};
    }
    std::vector<S> out(static_cast<std::size_t>(C) * out_h * out_w);
    const S* xv = x.value().data();
    for (int c = 0; c < C; ++c) {
        const S* xc = xv + static_cast<std::size_t>(c) * h * w;
        S* oc = out.data() + static_cast<std::size_t>(c) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const Tap& a = ty[y];
            for (int x = 0; x < out_w; ++x) {
                const Tap& b = tx[x];
                S v00 = xc[a.i0 * w + b.i0], v01 = xc[a.i0 * w + b.i1];
                S v10 = xc[a.i1 * w + b.i0], v11 = xc[a.i1 * w + b.i1];
                S top = v00 + b.w1 * (v01 - v00);
                S bot = v10 + b.w1 * (v11 - v10);
                oc[y * out_w + x] = top + a.w1 * (bot - top);
            }
        }
    }
    auto pb = [C, h, w, out_h, out_w, ty, tx](Node<S>& self) {
        Tensor<S> xp = self.parents[0];
        if (!xp.requires_grad()) return;
        xp.node()->ensure_grad();
        S* gx = xp.grad().data();
        const S* g = self.grad.data();
        for (int c = 0; c < C; ++c) {
            S* gxc = gx + static_cast<std::size_t>(c) * h * w;
            const S* gc = g + static_cast<std::size_t>(c) * out_h * out_w;
            for (int y = 0; y < out_h; ++y) {
                const Tap& a = ty[y];
                for (int x = 0; x < out_w; ++x) {
                    const Tap& b = tx[x];
                    S gv = gc[y * out_w + x];
                    S wy1 = a.w1, wx1 = b.w1;
                    gxc[a.i0 * w + b.i0] += gv * (1 - wy1) * (1 - wx1);
                    gxc[a.i0 * w + b.i1] += gv * (1 - wy1) * wx1;
                    gxc[a.i1 * w + b.i0] += gv * wy1 * (1 - wx1);
                    gxc[a.i1 * w + b.i1] += gv * wy1 * wx1;
                }
            }
        }
    };
    return detail::make_op<S>({C, out_h, out_w}, std::move(out), {x}, std::move(pb));
}

// Differentiable bilinear sampling of image [C,H,W] at map [2,h,w] holding
// normalized (u,v). Matches the raster sampler numerically (clamp-to-edge).
// Gradients flow into the image and into the coordinates; clamped
// coordinates receive sub-gradient 0.
template <class S>
Tensor<S> grid_sample(const Tensor<S>& image, const Tensor<S>& map) {
    const Shape& is = image.shape();
    const Shape& ms = map.shape();
    if (is.size() != 3 || ms.size() != 3 || ms[0] != 2)
        throw std::invalid_argument("grid_sample: expects image [C,H,W], map [2,h,w]");
    int C = is[0], H = is[1], W = is[2];
    int h = ms[1], w = ms[2];
    std::size_t cells = static_cast<std::size_t>(h) * w;
    std::vector<S> out(static_cast<std::size_t>(C) * cells);
    const S* img = image.value().data();
    const S* uv = map.value().data();
    for (std::size_t i = 0; i < cells; ++i) {
        S u = uv[i], v = uv[cells + i];
        S px = u * static_cast<S>(W) - S(0.5);
        S py = v * static_cast<S>(H) - S(0.5);
        if (!std::isfinite(px)) px = S(0);
        if (!std::isfinite(py)) py = S(0);
        px = std::clamp(px, S(0), static_cast<S>(W - 1));
        py = std::clamp(py, S(0), static_cast<S>(H - 1));
        int x0 = std::min(static_cast<int>(px), std::max(W - 2, 0));
        int y0 = std::min(static_cast<int>(py), std::max(H - 2, 0));
        int x1 = std::min(x0 + 1, W - 1);
        int y1 = std::min(y0 + 1, H - 1);
        S wx = px - static_cast<S>(x0);
        S wy = py - static_cast<S>(y0);
        for (int c = 0; c < C; ++c) {
            const S* pc = img + static_cast<std::size_t>(c) * H * W;
            S a = pc[y0 * W + x0] + wx * (pc[y0 * W + x1] - pc[y0 * W + x0]);
            S b = pc[y1 * W + x0] + wx * (pc[y1 * W + x1] - pc[y1 * W + x0]);
            out[c * cells + i] = a + wy * (b - a);
        }
    }
    auto pb = [C, H, W, h, w, cells](Node<S>& self) {
        Tensor<S> img_p = self.parents[0];
        Tensor<S> map_p = self.parents[1];
        const S* img = img_p.value().data();
        const S* uv = map_p.value().data();
        const S* g = self.grad.data();
        bool need_img = img_p.requires_grad();
        bool need_map = map_p.requires_grad();
        if (need_img) img_p.node()->ensure_grad();
        if (need_map) map_p.node()->ensure_grad();
        S* gimg = need_img ? img_p.grad().data() : nullptr;
        S* gmap = need_map ? map_p.grad().data() : nullptr;
        for (std::size_t i = 0; i < cells; ++i) {
            S u = uv[i], v = uv[cells + i];
            S px_raw = u * static_cast<S>(W) - S(0.5);
            S py_raw = v * static_cast<S>(H) - S(0.5);
            bool cx = !(px_raw >= S(0) && px_raw <= static_cast<S>(W - 1));
            bool cy = !(py_raw >= S(0) && py_raw <= static_cast<S>(H - 1));
            S px = std::isfinite(px_raw) ? std::clamp(px_raw, S(0), static_cast<S>(W - 1)) : S(0);
            S py = std::isfinite(py_raw) ? std::clamp(py_raw, S(0), static_cast<S>(H - 1)) : S(0);
            int x0 = std::min(static_cast<int>(px), std::max(W - 2, 0));
            int y0 = std::min(static_cast<int>(py), std::max(H - 2, 0));
            int x1 = std::min(x0 + 1, W - 1);
            int y1 = std::min(y0 + 1, H - 1);
            S wx = px - static_cast<S>(x0);
            S wy = py - static_cast<S>(y0);
            S du = S(0), dv = S(0);
            for (int c = 0; c < C; ++c) {
                const S* pc = img + static_cast<std::size_t>(c) * H * W;
                S gv = g[c * cells + i];
                if (need_img) {
                    S* gc = gimg + static_cast<std::size_t>(c) * H * W;
                    gc[y0 * W + x0] += gv * (1 - wy) * (1 - wx);
                    gc[y0 * W + x1] += gv * (1 - wy) * wx;
                    gc[y1 * W + x0] += gv * wy * (1 - wx);
                    gc[y1 * W + x1] += gv * wy * wx;
                }
                if (need_map) {
                    S ddx = (1 - wy) * (pc[y0 * W + x1] - pc[y0 * W + x0]) +
                            wy * (pc[y1 * W + x1] - pc[y1 * W + x0]);
                    S ddy = (1 - wx) * (pc[y1 * W + x0] - pc[y0 * W + x0]) +
                            wx * (pc[y1 * W + x1] - pc[y0 * W + x1]);
                    du += gv * ddx;
                    dv += gv * ddy;
                }
            }
            if (need_map) {
                gmap[i] += cx ? S(0) : du * static_cast<S>(W);
                gmap[cells + i] += cy ? S(0) : dv * static_cast<S>(H);
            }
        }
    };
    return detail::make_op<S>({C, h, w}, std::move(out), {image, map}, std::move(pb));
}

// ---------------------------------------------------------------------------
// reductions & scalar algebra

// sum of |x - target|; divide by the cell count at the call site to pin the
// intended mean semantics there.
template <class S>
Tensor<S> sum_abs_diff(const Tensor<S>& x, const Tensor<S>& target) {
    if (x.shape() != target.shape()) throw std::invalid_argument("sum_abs_diff: shape mismatch");
    S acc = S(0);
    for (std::size_t i = 0; i < x.numel(); ++i) acc += std::abs(x.value()[i] - target.value()[i]);
    return detail::make_op<S>(
        {1}, {acc}, {x, target}, [](Node<S>& self) {
            S g = self.grad[0];
            Tensor<S> xp = self.parents[0];
            Tensor<S> tp = self.parents[1];
            const S* xv = xp.value().data();
            const S* tv = tp.value().data();
            if (xp.requires_grad()) {
                xp.node()->ensure_grad();
                S* gx = xp.grad().data();
                for (std::size_t i = 0; i < xp.numel(); ++i) {
                    S d = xv[i] - tv[i];
                    gx[i] += g * (d > S(0) ? S(1) : (d < S(0) ? S(-1) : S(0)));
                }
            }
            if (tp.requires_grad()) {
                tp.node()->ensure_grad();
                S* gt = tp.grad().data();
                for (std::size_t i = 0; i < tp.numel(); ++i) {
                    S d = xv[i] - tv[i];
                    gt[i] -= g * (d > S(0) ? S(1) : (d < S(0) ? S(-1) : S(0)));
                }
            }
        });
}

template <class S>
Tensor<S> mul_scalar(const Tensor<S>& x, S k) {
    std::vector<S> v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.value()[i] * k;
    return detail::make_op<S>(
        x.shape(), std::move(v), {x}, [k](Node<S>& self) {
            Tensor<S> xp = self.parents[0];
            if (!xp.requires_grad()) return;
            xp.node()->ensure_grad();
            S* gx = xp.grad().data();
            const S* g = self.grad.data();
            for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += k * g[i];
        });
}

// scalar projection <x, w>; the usual smooth reduction for gradient tests
// and for loss weighting
template <class S>
Tensor<S> weighted_sum(const Tensor<S>& x, const Tensor<S>& w) {
    if (x.shape() != w.shape()) throw std::invalid_argument("weighted_sum: shape mismatch");
    S acc = S(0);
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x.value()[i] * w.value()[i];
    return detail::make_op<S>(
        {1}, {acc}, {x, w}, [](Node<S>& self) {
            S g = self.grad[0];
            Tensor<S> xp = self.parents[0];
            Tensor<S> wp = self.parents[1];
            if (xp.requires_grad()) {
                xp.node()->ensure_grad();
                S* gx = xp.grad().data();
                const S* wv = wp.value().data();
                for (std::size_t i = 0; i < xp.numel(); ++i) gx[i] += g * wv[i];
            }
            if (wp.requires_grad()) {
                wp.node()->ensure_grad();
                S* gw = wp.grad().data();
                const S* xv = xp.value().data();
                for (std::size_t i = 0; i < wp.numel(); ++i) gw[i] += g * xv[i];
            }
        });
}

template <class S>
Tensor<S> sum_tensor(const Tensor<S>& x) {
    S acc = S(0);
    for (S v : x.value()) acc += v;
    return detail::make_op<S>(
        {1}, {acc}, {x}, [](Node<S>& self) {
            Tensor<S> xp = self.parents[0];
            if (!xp.requires_grad()) return;
            xp.node()->ensure_grad();
            S g = self.grad[0];
            for (auto& gv : xp.grad()) gv += g;
        });
}

}  // namespace tadoc::ad

#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tadoc/autodiff.hpp"
#include "tadoc/errors.hpp"
#include "tadoc/rng.hpp"

namespace tadoc::nn {

using ad::Tensor;

template <class S>
Tensor<S> kaiming_uniform(ad::Shape shape, int fan_in, Rng& rng, const std::string& name) {
    double bound = std::sqrt(6.0 / fan_in);
    std::vector<S> v(ad::shape_numel(shape));
    for (auto& x : v) x = static_cast<S>(rng.uniform(-bound, bound));
    Tensor<S> t = Tensor<S>::from(std::move(shape), std::move(v), true);
    t.set_name(name);
    return t;
}

template <class S>
Tensor<S> zeros_param(ad::Shape shape, const std::string& name) {
    Tensor<S> t = Tensor<S>::zeros(std::move(shape), true);
    t.set_name(name);
    return t;
}

template <class S>
Tensor<S> ones_param(ad::Shape shape, const std::string& name) {
    std::vector<S> v(ad::shape_numel(shape), S(1));
    Tensor<S> t = Tensor<S>::from(std::move(shape), std::move(v), true);
    t.set_name(name);
    return t;
}

template <class S>
struct Conv2d {
    Tensor<S> weight, bias;
    int stride = 1, dilation = 1, padding = 0;

    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int k, int stride_, int dilation_, int padding_, Rng& rng,
           const std::string& name)
        : stride(stride_), dilation(dilation_), padding(padding_) {
        weight = kaiming_uniform<S>({out_ch, in_ch, k, k}, in_ch * k * k, rng, name + ".weight");
        bias = zeros_param<S>({out_ch}, name + ".bias");
    }

    Tensor<S> operator()(const Tensor<S>& x) const {
        return ad::conv2d(x, weight, bias, stride, dilation, padding);
    }
};

template <class S>
struct Linear {
    Tensor<S> weight, bias;

    Linear() = default;
    Linear(int in_dim, int out_dim, Rng& rng, const std::string& name) {
        weight = kaiming_uniform<S>({out_dim, in_dim}, in_dim, rng, name + ".weight");
        bias = zeros_param<S>({out_dim}, name + ".bias");
    }

    Tensor<S> operator()(const Tensor<S>& x) const { return ad::linear(x, weight, bias); }
};

template <class S>
struct GroupNorm {
    int groups = 8;
    Tensor<S> gamma, beta;

    GroupNorm() = default;
    GroupNorm(int channels, int groups_, const std::string& name) : groups(groups_) {
        gamma = ones_param<S>({channels}, name + ".gamma");
        beta = zeros_param<S>({channels}, name + ".beta");
    }

    Tensor<S> operator()(const Tensor<S>& x) const {
        return ad::group_norm(x, groups, gamma, beta);
    }
};

// GN -> ReLU -> conv3x3 -> GN -> ReLU -> conv3x3, plus the skip path
// (1x1 conv on the skip when the channel count changes).
template <class S>
struct ResidualBlock {
    GroupNorm<S> n1, n2;
    Conv2d<S> c1, c2;
    std::optional<Conv2d<S>> skip;

    ResidualBlock() = default;
    ResidualBlock(int in_ch, int out_ch, int groups, Rng& rng, const std::string& name)
        : n1(in_ch, groups, name + ".n1"),
          n2(out_ch, groups, name + ".n2"),
          c1(in_ch, out_ch, 3, 1, 1, 1, rng, name + ".c1"),
          c2(out_ch, out_ch, 3, 1, 1, 1, rng, name + ".c2") {
        if (in_ch != out_ch) skip.emplace(in_ch, out_ch, 1, 1, 1, 0, rng, name + ".skip");
    }

    Tensor<S> operator()(const Tensor<S>& x) const {
        auto h = c1(ad::relu(n1(x)));
        h = c2(ad::relu(n2(h)));
        auto s = skip ? (*skip)(x) : x;
        return ad::add(h, s);
    }
};

// Interleaved sin/cos embedding with frequencies 10000^(-2i/dim); a constant
// leaf (no gradient flows into the time step).
template <class S>
Tensor<S> sinusoidal_embedding(double t_scaled, int dim) {
    if (dim < 2 || dim % 2 != 0)
        throw std::invalid_argument("sinusoidal_embedding: dim must be even and >= 2");
    std::vector<S> v(dim);
    for (int i = 0; i < dim / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * i / dim);
        v[2 * i] = static_cast<S>(std::sin(t_scaled * freq));
        v[2 * i + 1] = static_cast<S>(std::cos(t_scaled * freq));
    }
    return Tensor<S>::from({dim}, std::move(v));
}

// ---------------------------------------------------------------------------
// optimizer

// Decoupled weight decay: theta <- theta*(1 - lr*wd) - lr * mhat/(sqrt(vhat)+eps).
template <class S>
class AdamW {
public:
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;

    AdamW() = default;
    AdamW(double lr_, double weight_decay_) : lr(lr_), weight_decay(weight_decay_) {}

    int step_count() const { return step_; }

    void step(std::vector<Tensor<S>>& params) {
        if (slots_.size() != params.size()) {
            slots_.clear();
            slots_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                slots_[i].m.assign(params[i].numel(), S(0));
                slots_[i].v.assign(params[i].numel(), S(0));
            }
        }
        ++step_;
        double bc1 = 1.0 - std::pow(beta1, step_);
        double bc2 = 1.0 - std::pow(beta2, step_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            p.node()->ensure_grad();
            S* theta = p.value().data();
            const S* g = p.grad().data();
            S* m = slots_[i].m.data();
            S* v = slots_[i].v.data();
            for (std::size_t k = 0; k < p.numel(); ++k) {
                m[k] = static_cast<S>(beta1 * m[k] + (1.0 - beta1) * g[k]);
                v[k] = static_cast<S>(beta2 * v[k] + (1.0 - beta2) * g[k] * g[k]);
                double mhat = m[k] / bc1;
                double vhat = v[k] / bc2;
                double upd = lr * mhat / (std::sqrt(vhat) + eps);
                theta[k] = static_cast<S>(theta[k] * (1.0 - lr * weight_decay) - upd);
            }
        }
    }

private:
    struct Slot {
        std::vector<S> m, v;
    };
    std::vector<Slot> slots_;
    int step_ = 0;
};

template <class S>
void zero_grads(std::vector<Tensor<S>>& params) {
    for (auto& p : params) p.zero_grad();
}

// ---------------------------------------------------------------------------
// TAPW parameter container: "TAPW", version u16 = 1, count u32, then per
// parameter {name_len u16, name bytes, rank u8, dims u32 x rank, float32
// payload}, all little-endian. Round-trips bit-exactly.

namespace detail_io {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail_io

struct NamedParam {
    std::string name;
    ad::Shape shape;
    std::vector<float> values;
};

inline std::vector<std::uint8_t> encode_tapw(const std::vector<NamedParam>& params) {
    using namespace detail_io;
    std::vector<std::uint8_t> out{'T', 'A', 'P', 'W'};
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_u16(out, static_cast<std::uint16_t>(p.name.size()));
        out.insert(out.end(), p.name.begin(), p.name.end());
        out.push_back(static_cast<std::uint8_t>(p.shape.size()));
        for (int d : p.shape) put_u32(out, static_cast<std::uint32_t>(d));
        std::size_t base = out.size();
        out.resize(base + p.values.size() * 4);
        std::memcpy(out.data() + base, p.values.data(), p.values.size() * 4);
    }
    return out;
}

inline std::vector<NamedParam> decode_tapw(const std::uint8_t* bytes, std::size_t size,
                                           std::size_t* consumed = nullptr) {
    using namespace detail_io;
    if (size < 4 || std::memcmp(bytes, "TAPW", 4) != 0) throw ParseError("TAPW: bad magic", 0);
    if (size < 10) throw ParseError("TAPW: truncated header", size);
    std::uint16_t version = get_u16(bytes + 4);
    if (version != 1)
        throw UnsupportedFormat("TAPW: unsupported version " + std::to_string(version));
    std::uint32_t count = get_u32(bytes + 6);
    std::size_t pos = 10;
    std::vector<NamedParam> params;
    params.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (size - pos < 2) throw ParseError("TAPW: truncated name length", pos);
        std::uint16_t nlen = get_u16(bytes + pos);
        pos += 2;
        if (size - pos < nlen) throw ParseError("TAPW: truncated name", pos);
        NamedParam p;
        p.name.assign(reinterpret_cast<const char*>(bytes + pos), nlen);
        pos += nlen;
        if (size - pos < 1) throw ParseError("TAPW: truncated rank", pos);
        std::uint8_t rank = bytes[pos++];
        std::size_t numel = 1;
        for (int d = 0; d < rank; ++d) {
            if (size - pos < 4) throw ParseError("TAPW: truncated dims", pos);
            std::uint32_t dim = get_u32(bytes + pos);
            pos += 4;
            if (dim == 0) throw ParseError("TAPW: zero dimension", pos - 4);
            p.shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        if ((size - pos) / 4 < numel) throw ParseError("TAPW: truncated payload", size);
        p.values.resize(numel);
        std::memcpy(p.values.data(), bytes + pos, numel * 4);
        pos += numel * 4;
        params.push_back(std::move(p));
    }
    if (consumed) *consumed = pos;
    return params;
}

inline void save_tapw(const std::vector<NamedParam>& params, const std::string& path) {
    auto bytes = encode_tapw(params);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::vector<NamedParam> load_tapw(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return decode_tapw(bytes.data(), bytes.size());
}

}  // namespace tadoc::nn

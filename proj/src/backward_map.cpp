#include "tadoc/backward_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "tadoc/errors.hpp"

namespace tadoc {

void TimeStep::validate() const {
    if (total < 1) throw std::invalid_argument("TimeStep: total steps must be >= 1");
    if (t < 0 || t > total)
        throw std::invalid_argument("TimeStep: t=" + std::to_string(t) + " outside [0, " +
                                    std::to_string(total) + "]");
}

BackwardMap::BackwardMap(int height, int width) : height_(height), width_(width) {
    if (height < 1 || width < 1)
        throw std::invalid_argument("BackwardMap: dimensions must be >= 1");
    data_.resize(static_cast<std::size_t>(height) * width);
}

BackwardMap BackwardMap::identity(int height, int width) {
    BackwardMap m(height, width);
    for (int y = 0; y < height; ++y) {
        double v = (y + 0.5) / height;
        for (int x = 0; x < width; ++x) {
            m.at(y, x) = {(x + 0.5) / width, v};
        }
    }
    return m;
}

bool BackwardMap::all_finite() const {
    for (const auto& c : data_)
        if (!std::isfinite(c.u) || !std::isfinite(c.v)) return false;
    return true;
}

bool BackwardMap::valid_for_sampling() const {
    for (const auto& c : data_) {
        if (!(c.u >= -0.25 && c.u <= 1.25 && c.v >= -0.25 && c.v <= 1.25)) return false;
    }
    return true;
}

MapCoord BackwardMap::eval(double u, double v) const {
    if (!std::isfinite(u)) u = 0.0;
    if (!std::isfinite(v)) v = 0.0;
    u = std::clamp(u, 0.0, 1.0);
    v = std::clamp(v, 0.0, 1.0);
    double px = std::clamp(u * width_ - 0.5, 0.0, static_cast<double>(width_ - 1));
    double py = std::clamp(v * height_ - 0.5, 0.0, static_cast<double>(height_ - 1));
    int x0 = std::min(static_cast<int>(px), std::max(width_ - 2, 0));
    int y0 = std::min(static_cast<int>(py), std::max(height_ - 2, 0));
    int x1 = std::min(x0 + 1, width_ - 1);
    int y1 = std::min(y0 + 1, height_ - 1);
    double wx = px - x0;
    double wy = py - y0;
    const MapCoord& c00 = at(y0, x0);
    const MapCoord& c01 = at(y0, x1);
    const MapCoord& c10 = at(y1, x0);
    const MapCoord& c11 = at(y1, x1);
    double u0 = c00.u + wx * (c01.u - c00.u);
    double u1 = c10.u + wx * (c11.u - c10.u);
    double v0 = c00.v + wx * (c01.v - c00.v);
    double v1 = c10.v + wx * (c11.v - c10.v);
    return {u0 + wy * (u1 - u0), v0 + wy * (v1 - v0)};
}

MapCoord BackwardMap::eval_extrapolated(double u, double v) const {
    double px = std::isfinite(u) ? u * width_ - 0.5 : 0.0;
    double py = std::isfinite(v) ? v * height_ - 0.5 : 0.0;
    px = std::clamp(px, -1e6, 1e6);
    py = std::clamp(py, -1e6, 1e6);
    int x0 = std::clamp(static_cast<int>(std::floor(px)), 0, std::max(width_ - 2, 0));
    int y0 = std::clamp(static_cast<int>(std::floor(py)), 0, std::max(height_ - 2, 0));
    int x1 = std::min(x0 + 1, width_ - 1);
    int y1 = std::min(y0 + 1, height_ - 1);
    double wx = px - x0;  // may leave [0,1]: linear extrapolation
    double wy = py - y0;
    const MapCoord& c00 = at(y0, x0);
    const MapCoord& c01 = at(y0, x1);
    const MapCoord& c10 = at(y1, x0);
    const MapCoord& c11 = at(y1, x1);
    double u0 = c00.u + wx * (c01.u - c00.u);
    double u1 = c10.u + wx * (c11.u - c10.u);
    double v0 = c00.v + wx * (c01.v - c00.v);
    double v1 = c10.v + wx * (c11.v - c10.v);
    return {u0 + wy * (u1 - u0), v0 + wy * (v1 - v0)};
}

BackwardMap identity_grid(int height, int width) {
    if (height < 1 || width < 1)
        throw std::invalid_argument("identity_grid: dimensions must be >= 1");
    return BackwardMap::identity(height, width);
}

BackwardMap interpolate_map(const BackwardMap& f_T, TimeStep ts) {
    ts.validate();
    if (ts.t == 0) return identity_grid(f_T.height(), f_T.width());
    if (ts.t == ts.total) return f_T;
    double a = ts.fraction();
    BackwardMap out(f_T.height(), f_T.width());
    for (int y = 0; y < out.height(); ++y) {
        double v0 = (y + 0.5) / out.height();
        for (int x = 0; x < out.width(); ++x) {
            double u0 = (x + 0.5) / out.width();
            const MapCoord& c = f_T.at(y, x);
            out.at(y, x) = {u0 + a * (c.u - u0), v0 + a * (c.v - v0)};
        }
    }
    return out;
}

BackwardMap recover_final(const BackwardMap& f_t_hat, TimeStep ts) {
    ts.validate();
    if (ts.t == 0)
        throw std::invalid_argument("recover_final: t must be >= 1 (division by zero)");
    if (ts.t == ts.total) return f_t_hat;
    double a = static_cast<double>(ts.total) / static_cast<double>(ts.t);
    BackwardMap out(f_t_hat.height(), f_t_hat.width());
    for (int y = 0; y < out.height(); ++y) {
        double v0 = (y + 0.5) / out.height();
        for (int x = 0; x < out.width(); ++x) {
            double u0 = (x + 0.5) / out.width();
            const MapCoord& c = f_t_hat.at(y, x);
            out.at(y, x) = {u0 + a * (c.u - u0), v0 + a * (c.v - v0)};
        }
    }
    return out;
}

BackwardMap average_final(const std::vector<BackwardMap>& maps) {
    if (maps.empty()) throw std::invalid_argument("average_final: empty list");
    for (const auto& m : maps)
        if (!m.same_shape(maps.front()))
            throw std::invalid_argument("average_final: dimension mismatch");
    BackwardMap out(maps.front().height(), maps.front().width());
    const std::size_t n = out.cells();
    for (const auto& m : maps) {
        const MapCoord* src = m.data();
        MapCoord* dst = out.data();
        for (std::size_t i = 0; i < n; ++i) {
            dst[i].u += src[i].u;
            dst[i].v += src[i].v;
        }
    }
    double inv = 1.0 / static_cast<double>(maps.size());
    MapCoord* dst = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        dst[i].u *= inv;
        dst[i].v *= inv;
    }
    return out;
}

BackwardMap compose_maps(const BackwardMap& outer, const BackwardMap& inner) {
    BackwardMap out(outer.height(), outer.width());
    for (int y = 0; y < outer.height(); ++y)
        for (int x = 0; x < outer.width(); ++x) {
            const MapCoord& p = outer.at(y, x);
            out.at(y, x) = inner.eval(p.u, p.v);
        }
    return out;
}

InvertResult invert_map(const BackwardMap& m, double tol, int max_iters) {
    constexpr double kStep = 0.8;
    InvertResult res;
    res.map = BackwardMap(m.height(), m.width());
    res.converged.assign(m.cells(), 0);

    std::size_t failures = 0;
    for (int y = 0; y < m.height(); ++y) {
        double pv = (y + 0.5) / m.height();
        for (int x = 0; x < m.width(); ++x) {
            double pu = (x + 0.5) / m.width();
            // solve m(n) = p, starting from n = p
            double nu = pu, nv = pv;
            bool ok = false;
            for (int it = 0; it < max_iters; ++it) {
                MapCoord q = m.eval_extrapolated(nu, nv);
                double ru = pu - q.u;
                double rv = pv - q.v;
                if (std::abs(ru) < tol && std::abs(rv) < tol) {
                    ok = true;
                    break;
                }
                nu += kStep * ru;
                nv += kStep * rv;
                if (std::abs(nu) > 4.0 || std::abs(nv) > 4.0) break;  // diverged
            }
            res.map.at(y, x) = {nu, nv};
            res.converged[static_cast<std::size_t>(y) * m.width() + x] = ok ? 1 : 0;
            if (!ok) ++failures;
        }
    }
    res.failure_ratio = static_cast<double>(failures) / static_cast<double>(m.cells());
    if (res.failure_ratio > 0.01) throw InversionFailed(res.failure_ratio);
    return res;
}

double jacobian_min_det(const BackwardMap& m) {
    if (m.height() < 2 || m.width() < 2)
        throw std::invalid_argument("jacobian_min_det: needs at least a 2x2 map");
    // Cell spacing in normalized coordinates.
    double dx = 1.0 / m.width();
    double dy = 1.0 / m.height();
    double best = std::numeric_limits<double>::infinity();
    for (int y = 1; y < m.height() - 1; ++y)
        for (int x = 1; x < m.width() - 1; ++x) {
            double du_dx = (m.at(y, x + 1).u - m.at(y, x - 1).u) / (2.0 * dx);
            double dv_dx = (m.at(y, x + 1).v - m.at(y, x - 1).v) / (2.0 * dx);
            double du_dy = (m.at(y + 1, x).u - m.at(y - 1, x).u) / (2.0 * dy);
            double dv_dy = (m.at(y + 1, x).v - m.at(y - 1, x).v) / (2.0 * dy);
            double det = du_dx * dv_dy - du_dy * dv_dx;
            best = std::min(best, det);
        }
    if (m.height() == 2 || m.width() == 2) {
        // No interior cells; fall back to one-sided differences at (0,0).
        double du_dx = (m.at(0, 1).u - m.at(0, 0).u) / dx;
        double dv_dx = (m.at(0, 1).v - m.at(0, 0).v) / dx;
        double du_dy = (m.at(1, 0).u - m.at(0, 0).u) / dy;
        double dv_dy = (m.at(1, 0).v - m.at(0, 0).v) / dy;
        best = du_dx * dv_dy - du_dy * dv_dx;
    }
    return best;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32(const std::uint8_t* p) {
    std::uint32_t bits = get_u32(p);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_bmap(const BackwardMap& m) {
    std::vector<std::uint8_t> out;
    out.reserve(14 + m.cells() * 8);
    out.insert(out.end(), {'T', 'A', 'B', 'M'});
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(m.height()));
    put_u32(out, static_cast<std::uint32_t>(m.width()));
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            const MapCoord& c = m.at(y, x);
            put_f32(out, static_cast<float>(c.u));
            put_f32(out, static_cast<float>(c.v));
        }
    return out;
}

BackwardMap decode_bmap(const std::uint8_t* bytes, std::size_t size) {
    if (size < 4 || std::memcmp(bytes, "TABM", 4) != 0)
        throw ParseError("BMAP: bad magic", 0);
    if (size < 6) throw ParseError("BMAP: truncated version field", 4);
    std::uint16_t version = get_u16(bytes + 4);
    if (version != 1)
        throw UnsupportedFormat("BMAP: unsupported version " + std::to_string(version));
    if (size < 14) throw ParseError("BMAP: truncated header", 6);
    std::uint32_t h = get_u32(bytes + 6);
    std::uint32_t w = get_u32(bytes + 10);
    if (h == 0 || w == 0) throw ParseError("BMAP: zero dimension", 6);
    std::size_t need = 14 + static_cast<std::size_t>(h) * w * 8;
    if (size < need) throw ParseError("BMAP: truncated payload", size);
    BackwardMap m(static_cast<int>(h), static_cast<int>(w));
    const std::uint8_t* p = bytes + 14;
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i, p += 8) {
        m.data()[i].u = get_f32(p);
        m.data()[i].v = get_f32(p + 4);
    }
    if (!m.all_finite()) throw ParseError("BMAP: non-finite coordinate", 14);
    return m;
}

void save_bmap(const BackwardMap& m, const std::string& path) {
    auto bytes = encode_bmap(m);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

BackwardMap load_bmap(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return decode_bmap(bytes.data(), bytes.size());
}

}  // namespace tadoc

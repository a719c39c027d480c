#include "tadoc/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace tadoc {

RasterImage::RasterImage(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
    if (height < 1 || width < 1) throw std::invalid_argument("RasterImage: zero dimension");
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("RasterImage: channels must be 1 or 3");
    pixels_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

void RasterImage::clamp01() {
    for (auto& p : pixels_) p = std::clamp(p, 0.0f, 1.0f);
}

bool RasterImage::all_finite() const {
    for (float p : pixels_)
        if (!std::isfinite(p)) return false;
    return true;
}

namespace {

bool is_identity_grid(const BackwardMap& map) {
    for (int y = 0; y < map.height(); ++y) {
        double v = (y + 0.5) / map.height();
        for (int x = 0; x < map.width(); ++x) {
            const MapCoord& c = map.at(y, x);
            if (c.u != (x + 0.5) / map.width() || c.v != v) return false;
        }
    }
    return true;
}

}  // namespace

RasterImage sample_bilinear(const RasterImage& src, const BackwardMap& map) {
    if (!map.valid_for_sampling())
        throw std::invalid_argument("sample_bilinear: map coordinates outside [-0.25, 1.25]");
    if (map.height() == src.height() && map.width() == src.width() && is_identity_grid(map))
        return src;

    RasterImage out(map.height(), map.width(), src.channels());
    const int W = src.width(), H = src.height(), C = src.channels();
    for (int y = 0; y < map.height(); ++y) {
        for (int x = 0; x < map.width(); ++x) {
            const MapCoord& m = map.at(y, x);
            float px = std::clamp(static_cast<float>(m.u) * W - 0.5f, 0.0f,
                                  static_cast<float>(W - 1));
            float py = std::clamp(static_cast<float>(m.v) * H - 0.5f, 0.0f,
                                  static_cast<float>(H - 1));
            int x0 = std::min(static_cast<int>(px), std::max(W - 2, 0));
            int y0 = std::min(static_cast<int>(py), std::max(H - 2, 0));
            int x1 = std::min(x0 + 1, W - 1);
            int y1 = std::min(y0 + 1, H - 1);
            float wx = px - x0;
            float wy = py - y0;
            for (int c = 0; c < C; ++c) {
                float a = src.at(y0, x0, c) + wx * (src.at(y0, x1, c) - src.at(y0, x0, c));
                float b = src.at(y1, x0, c) + wx * (src.at(y1, x1, c) - src.at(y1, x0, c));
                out.at(y, x, c) = a + wy * (b - a);
            }
        }
    }
    return out;
}

BackwardMap upsample_map_bilinear(const BackwardMap& sparse, int out_h, int out_w) {
    if (out_h < sparse.height() || out_w < sparse.width())
        throw std::invalid_argument("upsample_map_bilinear: output smaller than input");
    const int h = sparse.height(), w = sparse.width();
    BackwardMap out(out_h, out_w);
    const double sx = static_cast<double>(w) / out_w;
    const double sy = static_cast<double>(h) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double py = (y + 0.5) * sy - 0.5;
        int y0 = std::clamp(static_cast<int>(std::floor(py)), 0, std::max(h - 2, 0));
        double wy = py - y0;  // may leave [0,1] at the borders: linear extrapolation
        int y1 = std::min(y0 + 1, h - 1);
        for (int x = 0; x < out_w; ++x) {
            double px = (x + 0.5) * sx - 0.5;
            int x0 = std::clamp(static_cast<int>(std::floor(px)), 0, std::max(w - 2, 0));
            double wx = px - x0;
            int x1 = std::min(x0 + 1, w - 1);
            const MapCoord& c00 = sparse.at(y0, x0);
            const MapCoord& c01 = sparse.at(y0, x1);
            const MapCoord& c10 = sparse.at(y1, x0);
            const MapCoord& c11 = sparse.at(y1, x1);
            double u0 = c00.u + wx * (c01.u - c00.u);
            double u1 = c10.u + wx * (c11.u - c10.u);
            double v0 = c00.v + wx * (c01.v - c00.v);
            double v1 = c10.v + wx * (c11.v - c10.v);
            out.at(y, x) = {u0 + wy * (u1 - u0), v0 + wy * (v1 - v0)};
        }
    }
    return out;
}

RasterImage resize_bilinear(const RasterImage& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: zero target");
    if (out_h == img.height() && out_w == img.width()) return img;
    RasterImage out(out_h, out_w, img.channels());
    const int W = img.width(), H = img.height(), C = img.channels();
    const double sx = static_cast<double>(W) / out_w;
    const double sy = static_cast<double>(H) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double py = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
        int y0 = std::min(static_cast<int>(py), std::max(H - 2, 0));
        int y1 = std::min(y0 + 1, H - 1);
        float wy = static_cast<float>(py - y0);
        for (int x = 0; x < out_w; ++x) {
            double px = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
            int x0 = std::min(static_cast<int>(px), std::max(W - 2, 0));
            int x1 = std::min(x0 + 1, W - 1);
            float wx = static_cast<float>(px - x0);
            for (int c = 0; c < C; ++c) {
                float a = img.at(y0, x0, c) + wx * (img.at(y0, x1, c) - img.at(y0, x0, c));
                float b = img.at(y1, x0, c) + wx * (img.at(y1, x1, c) - img.at(y1, x0, c));
                out.at(y, x, c) = a + wy * (b - a);
            }
        }
    }
    return out;
}

namespace {

// mirror without repeating the edge sample (…, 2, 1, 0, 1, 2, …)
int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

}  // namespace

RasterImage gaussian_downsample2x(const RasterImage& img) {
    static const float k[5] = {1.f / 16, 4.f / 16, 6.f / 16, 4.f / 16, 1.f / 16};
    const int H = img.height(), W = img.width(), C = img.channels();
    // horizontal pass
    RasterImage tmp(H, W, C);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) {
                float acc = 0.f;
                for (int i = -2; i <= 2; ++i)
                    acc += k[i + 2] * img.at(y, reflect101(x + i, W), c);
                tmp.at(y, x, c) = acc;
            }
    // vertical pass + decimation
    int oh = std::max(H / 2, 1), ow = std::max(W / 2, 1);
    RasterImage out(oh, ow, C);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            for (int c = 0; c < C; ++c) {
                float acc = 0.f;
                for (int i = -2; i <= 2; ++i)
                    acc += k[i + 2] * tmp.at(reflect101(2 * y + i, H), 2 * x, c);
                out.at(y, x, c) = acc;
            }
    return out;
}

RasterImage to_gray(const RasterImage& img) {
    if (img.channels() == 1) return img;
    RasterImage out(img.height(), img.width(), 1);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            out.at(y, x) = 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) +
                           0.114f * img.at(y, x, 2);
    return out;
}

}  // namespace tadoc

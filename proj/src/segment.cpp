#include "tadoc/segment.hpp"

#include <algorithm>
#include <array>
#include <deque>

namespace tadoc {

float otsu_threshold(const RasterImage& gray) {
    std::array<std::size_t, 256> hist{};
    for (std::size_t i = 0; i < gray.size(); ++i) {
        int bin = std::clamp(static_cast<int>(gray.data()[i] * 255.0f + 0.5f), 0, 255);
        ++hist[bin];
    }
    std::size_t total = gray.size();
    double sum_all = 0;
    for (int i = 0; i < 256; ++i) sum_all += i * static_cast<double>(hist[i]);
    double sum_b = 0, w_b = 0, best_var = -1;
    int best_t = 127;
    for (int t = 0; t < 256; ++t) {
        w_b += static_cast<double>(hist[t]);
        if (w_b == 0) continue;
        double w_f = static_cast<double>(total) - w_b;
        if (w_f == 0) break;
        sum_b += t * static_cast<double>(hist[t]);
        double m_b = sum_b / w_b;
        double m_f = (sum_all - sum_b) / w_f;
        double between = w_b * w_f * (m_b - m_f) * (m_b - m_f);
        if (between > best_var) {
            best_var = between;
            best_t = t;
        }
    }
    return (best_t + 0.5f) / 255.0f;
}

std::vector<std::uint8_t> threshold_above(const RasterImage& gray, float thresh) {
    std::vector<std::uint8_t> out(gray.size());
    for (std::size_t i = 0; i < gray.size(); ++i) out[i] = gray.data()[i] >= thresh ? 1 : 0;
    return out;
}

std::vector<std::uint8_t> threshold_below(const RasterImage& gray, float thresh) {
    std::vector<std::uint8_t> out(gray.size());
    for (std::size_t i = 0; i < gray.size(); ++i) out[i] = gray.data()[i] < thresh ? 1 : 0;
    return out;
}

std::vector<Component> connected_components(const std::vector<std::uint8_t>& mask, int h, int w,
                                            std::vector<int>* labels_out) {
    std::vector<int> labels(mask.size(), 0);
    std::vector<Component> comps;
    std::deque<int> queue;
    int next = 0;
    for (int start = 0; start < h * w; ++start) {
        if (!mask[start] || labels[start]) continue;
        ++next;
        Component c;
        c.label = next;
        c.min_x = c.max_x = start % w;
        c.min_y = c.max_y = start / w;
        labels[start] = next;
        queue.push_back(start);
        while (!queue.empty()) {
            int i = queue.front();
            queue.pop_front();
            int x = i % w, y = i / w;
            ++c.pixels;
            c.min_x = std::min(c.min_x, x);
            c.max_x = std::max(c.max_x, x);
            c.min_y = std::min(c.min_y, y);
            c.max_y = std::max(c.max_y, y);
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
                int j = ny[k] * w + nx[k];
                if (mask[j] && !labels[j]) {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
        comps.push_back(c);
    }
    if (labels_out) *labels_out = std::move(labels);
    return comps;
}

void keep_largest_component(std::vector<std::uint8_t>& mask, int h, int w) {
    std::vector<int> labels;
    auto comps = connected_components(mask, h, w, &labels);
    if (comps.empty()) return;
    int best = comps[0].label;
    std::size_t best_n = comps[0].pixels;
    for (const auto& c : comps)
        if (c.pixels > best_n) {
            best = c.label;
            best_n = c.pixels;
        }
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = labels[i] == best ? 1 : 0;
}

void fill_holes(std::vector<std::uint8_t>& mask, int h, int w) {
    // flood the complement from the border; anything unreached is a hole
    std::vector<std::uint8_t> outside(mask.size(), 0);
    std::deque<int> queue;
    auto push = [&](int x, int y) {
        int i = y * w + x;
        if (!mask[i] && !outside[i]) {
            outside[i] = 1;
            queue.push_back(i);
        }
    };
    for (int x = 0; x < w; ++x) {
        push(x, 0);
        push(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        push(0, y);
        push(w - 1, y);
    }
    while (!queue.empty()) {
        int i = queue.front();
        queue.pop_front();
        int x = i % w, y = i / w;
        if (x > 0) push(x - 1, y);
        if (x < w - 1) push(x + 1, y);
        if (y > 0) push(x, y - 1);
        if (y < h - 1) push(x, y + 1);
    }
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!mask[i] && !outside[i]) mask[i] = 1;
}

namespace {

// separable rectangular dilation: running max via two passes
void dilate_rect(std::vector<std::uint8_t>& mask, int h, int w, int rx, int ry) {
    if (rx > 0) {
        std::vector<std::uint8_t> tmp(mask.size(), 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!mask[y * w + x]) continue;
                int x0 = std::max(0, x - rx), x1 = std::min(w - 1, x + rx);
                for (int i = x0; i <= x1; ++i) tmp[y * w + i] = 1;
            }
        mask.swap(tmp);
    }
    if (ry > 0) {
        std::vector<std::uint8_t> tmp(mask.size(), 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!mask[y * w + x]) continue;
                int y0 = std::max(0, y - ry), y1 = std::min(h - 1, y + ry);
                for (int i = y0; i <= y1; ++i) tmp[i * w + x] = 1;
            }
        mask.swap(tmp);
    }
}

void erode_rect(std::vector<std::uint8_t>& mask, int h, int w, int rx, int ry) {
    for (auto& v : mask) v = v ? 0 : 1;
    dilate_rect(mask, h, w, rx, ry);
    for (auto& v : mask) v = v ? 0 : 1;
}

}  // namespace

void morph_close(std::vector<std::uint8_t>& mask, int h, int w, int rx, int ry) {
    dilate_rect(mask, h, w, rx, ry);
    erode_rect(mask, h, w, rx, ry);
}

RasterImage mask_to_soft_image(const std::vector<std::uint8_t>& mask, int h, int w) {
    RasterImage out(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float acc = 0;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    acc += mask[yy * w + xx];
                    ++n;
                }
            out.at(y, x) = acc / n;
        }
    return out;
}

}  // namespace tadoc

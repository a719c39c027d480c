#include "tadoc/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tadoc/errors.hpp"
#include "tadoc/segment.hpp"

namespace tadoc {

// ---------------------------------------------------------------------------
// MS-SSIM

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr std::array<double, 5> kMsWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr int kWin = 11;

std::array<float, kWin> gaussian_window() {
    std::array<float, kWin> k{};
    double sigma = 1.5, sum = 0;
    for (int i = 0; i < kWin; ++i) {
        double d = i - (kWin - 1) / 2.0;
        k[i] = static_cast<float>(std::exp(-d * d / (2 * sigma * sigma)));
        sum += k[i];
    }
    for (auto& v : k) v = static_cast<float>(v / sum);
    return k;
}

// separable valid-region filtering
RasterImage filter_valid(const RasterImage& img, const std::array<float, kWin>& k) {
    int H = img.height(), W = img.width();
    int OW = W - kWin + 1, OH = H - kWin + 1;
    RasterImage tmp(H, OW, 1);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < OW; ++x) {
            float acc = 0;
            for (int i = 0; i < kWin; ++i) acc += k[i] * img.at(y, x + i);
            tmp.at(y, x) = acc;
        }
    RasterImage out(OH, OW, 1);
    for (int y = 0; y < OH; ++y)
        for (int x = 0; x < OW; ++x) {
            float acc = 0;
            for (int i = 0; i < kWin; ++i) acc += k[i] * tmp.at(y + i, x);
            out.at(y, x) = acc;
        }
    return out;
}

struct LevelStats {
    double luminance_cs = 0;  // mean of l*cs
    double cs = 0;            // mean of cs
};

LevelStats ssim_level(const RasterImage& a, const RasterImage& b) {
    static const auto win = gaussian_window();
    RasterImage aa(a.height(), a.width(), 1), bb(a.height(), a.width(), 1),
        ab(a.height(), a.width(), 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa.data()[i] = a.data()[i] * a.data()[i];
        bb.data()[i] = b.data()[i] * b.data()[i];
        ab.data()[i] = a.data()[i] * b.data()[i];
    }
    RasterImage mu_a = filter_valid(a, win);
    RasterImage mu_b = filter_valid(b, win);
    RasterImage e_aa = filter_valid(aa, win);
    RasterImage e_bb = filter_valid(bb, win);
    RasterImage e_ab = filter_valid(ab, win);

    double sum_lcs = 0, sum_cs = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        double ma = mu_a.data()[i], mb = mu_b.data()[i];
        double va = e_aa.data()[i] - ma * ma;
        double vb = e_bb.data()[i] - mb * mb;
        double cab = e_ab.data()[i] - ma * mb;
        double l = (2 * ma * mb + kC1) / (ma * ma + mb * mb + kC1);
        double cs = (2 * cab + kC2) / (va + vb + kC2);
        sum_lcs += l * cs;
        sum_cs += cs;
    }
    return {sum_lcs / mu_a.size(), sum_cs / mu_a.size()};
}

}  // namespace

double ms_ssim(const RasterImage& a_in, const RasterImage& b_in) {
    if (a_in.height() != b_in.height() || a_in.width() != b_in.width())
        throw std::invalid_argument("ms_ssim: dimension mismatch");
    RasterImage a = to_gray(a_in);
    RasterImage b = to_gray(b_in);

    int min_dim = std::min(a.height(), a.width());
    int levels = 0;
    while (levels < 5 && (min_dim >> levels) >= kWin) ++levels;
    if (levels == 0)
        throw std::invalid_argument("ms_ssim: images smaller than the 11x11 window");

    double weight_sum = 0;
    for (int j = 0; j < levels; ++j) weight_sum += kMsWeights[j];

    double value = 1.0;
    for (int j = 0; j < levels; ++j) {
        LevelStats st = ssim_level(a, b);
        double w = kMsWeights[j] / weight_sum;
        double term = (j == levels - 1) ? st.luminance_cs : st.cs;
        term = std::max(term, 0.0);  // negative similarity cannot enter the product
        value *= std::pow(term, w);
        if (j + 1 < levels) {
            a = gaussian_downsample2x(a);
            b = gaussian_downsample2x(b);
        }
    }
    return value;
}

// ---------------------------------------------------------------------------
// LD / AD oracles

namespace {

struct Correspondence {
    // per interior cell: output pixel position and the flat-frame pixel
    // position its content belongs to
    std::vector<double> px, py, qx, qy;
};

Correspondence residual_correspondence(const BackwardMap& pred_map, const BackwardMap& gt_map,
                                       int out_h, int out_w, int margin) {
    InvertResult inv = invert_map(gt_map);
    Correspondence c;
    for (int y = margin; y < out_h - margin; ++y) {
        double v = (y + 0.5) / out_h;
        for (int x = margin; x < out_w - margin; ++x) {
            double u = (x + 0.5) / out_w;
            MapCoord q = pred_map.eval(u, v);
            // convergence of the inversion at the cell the content lands in
            int cx = std::clamp(static_cast<int>(q.u * inv.map.width()), 0,
                                inv.map.width() - 1);
            int cy = std::clamp(static_cast<int>(q.v * inv.map.height()), 0,
                                inv.map.height() - 1);
            if (!inv.converged[static_cast<std::size_t>(cy) * inv.map.width() + cx]) continue;
            MapCoord r = inv.map.eval(q.u, q.v);
            c.px.push_back((x + 0.5));
            c.py.push_back((y + 0.5));
            c.qx.push_back(r.u * out_w);
            c.qy.push_back(r.v * out_h);
        }
    }
    return c;
}

}  // namespace

double ld_oracle(const BackwardMap& pred_map, const BackwardMap& gt_map, int out_h, int out_w,
                 int interior_margin) {
    if (out_h < 2 * interior_margin + 2 || out_w < 2 * interior_margin + 2)
        throw std::invalid_argument("ld_oracle: output grid too small");
    Correspondence c = residual_correspondence(pred_map, gt_map, out_h, out_w, interior_margin);
    if (c.px.empty()) throw InversionFailed(1.0);
    double total = 0;
    for (std::size_t i = 0; i < c.px.size(); ++i) {
        double dx = c.qx[i] - c.px[i];
        double dy = c.qy[i] - c.py[i];
        total += std::sqrt(dx * dx + dy * dy);
    }
    return total / static_cast<double>(c.px.size());
}

std::optional<double> ad_oracle(const BackwardMap& pred_map, const BackwardMap& gt_map,
                                const RasterImage& flat_image, int out_h, int out_w,
                                int interior_margin) {
    Correspondence c = residual_correspondence(pred_map, gt_map, out_h, out_w, interior_margin);
    if (c.px.empty()) return std::nullopt;

    RasterImage gray = to_gray(flat_image);
    if (gray.height() != out_h || gray.width() != out_w)
        gray = resize_bilinear(gray, out_h, out_w);

    auto weight_at = [&](double px, double py) {
        int x = std::clamp(static_cast<int>(px), 1, out_w - 2);
        int y = std::clamp(static_cast<int>(py), 1, out_h - 2);
        double gx = 0.5 * (gray.at(y, x + 1) - gray.at(y, x - 1));
        double gy = 0.5 * (gray.at(y + 1, x) - gray.at(y - 1, x));
        return std::sqrt(gx * gx + gy * gy) + 1e-3;
    };

    // weighted least squares for q -> p under p ~ s*q + tau
    double sw = 0, mqx = 0, mqy = 0, mpx = 0, mpy = 0;
    std::vector<double> w(c.px.size());
    for (std::size_t i = 0; i < c.px.size(); ++i) {
        w[i] = weight_at(c.px[i], c.py[i]);
        sw += w[i];
        mqx += w[i] * c.qx[i];
        mqy += w[i] * c.qy[i];
        mpx += w[i] * c.px[i];
        mpy += w[i] * c.py[i];
    }
    if (sw <= 0) return std::nullopt;
    mqx /= sw;
    mqy /= sw;
    mpx /= sw;
    mpy /= sw;
    double num = 0, den = 0;
    for (std::size_t i = 0; i < c.px.size(); ++i) {
        double qx = c.qx[i] - mqx, qy = c.qy[i] - mqy;
        double px = c.px[i] - mpx, py = c.py[i] - mpy;
        num += w[i] * (qx * px + qy * py);
        den += w[i] * (qx * qx + qy * qy);
    }
    double s = den > 1e-12 ? num / den : 1.0;
    double tx = mpx - s * mqx;
    double ty = mpy - s * mqy;

    double total = 0;
    for (std::size_t i = 0; i < c.px.size(); ++i) {
        double rx = s * c.qx[i] + tx - c.px[i];
        double ry = s * c.qy[i] + ty - c.py[i];
        total += w[i] * std::sqrt(rx * rx + ry * ry);
    }
    double diag = std::sqrt(static_cast<double>(out_h) * out_h +
                            static_cast<double>(out_w) * out_w);
    return total / sw / diag;
}

// ---------------------------------------------------------------------------
// registration-based LD

namespace {

double block_mad(const RasterImage& a, const RasterImage& b, int ax, int ay, int bx, int by,
                 int bs) {
    double acc = 0;
    for (int y = 0; y < bs; ++y)
        for (int x = 0; x < bs; ++x)
            acc += std::abs(static_cast<double>(a.at(ay + y, ax + x)) - b.at(by + y, bx + x));
    return acc / (bs * bs);
}

}  // namespace

double ld_registration(const RasterImage& a_in, const RasterImage& b_in) {
    if (a_in.height() != b_in.height() || a_in.width() != b_in.width())
        throw std::invalid_argument("ld_registration: dimension mismatch");
    constexpr int kLevels = 3, kBlock = 8, kSearch = 4;
    constexpr double kLambda = 0.5;
    // one pixel of deviation from the reference costs lambda/32 in MAD
    // units, so a confident match can always override the prior
    const double dev_norm = static_cast<double>(kBlock) * kSearch;

    std::vector<RasterImage> pa{to_gray(a_in)}, pb{to_gray(b_in)};
    for (int l = 1; l < kLevels; ++l) {
        pa.push_back(gaussian_downsample2x(pa.back()));
        pb.push_back(gaussian_downsample2x(pb.back()));
    }

    // flow per block, coarse to fine
    std::vector<double> fx, fy;
    int bw = 0, bh = 0;
    for (int l = kLevels - 1; l >= 0; --l) {
        const RasterImage& A = pa[l];
        const RasterImage& B = pb[l];
        int nbx = A.width() / kBlock, nby = A.height() / kBlock;
        if (nbx < 1 || nby < 1) continue;
        std::vector<double> ix(static_cast<std::size_t>(nbx) * nby, 0.0);
        std::vector<double> iy(static_cast<std::size_t>(nbx) * nby, 0.0);
        if (!fx.empty()) {
            // upsample previous flow (nearest block, doubled displacement)
            for (int y = 0; y < nby; ++y)
                for (int x = 0; x < nbx; ++x) {
                    int sx = std::min(x / 2, bw - 1), sy = std::min(y / 2, bh - 1);
                    ix[static_cast<std::size_t>(y) * nbx + x] = 2.0 * fx[sy * bw + sx];
                    iy[static_cast<std::size_t>(y) * nbx + x] = 2.0 * fy[sy * bw + sx];
                }
        }
        auto match_pass = [&](const std::vector<double>& refx, const std::vector<double>& refy,
                              std::vector<double>& outx, std::vector<double>& outy) {
            for (int by = 0; by < nby; ++by)
                for (int bx = 0; bx < nbx; ++bx) {
                    std::size_t bi = static_cast<std::size_t>(by) * nbx + bx;
                    int ax = bx * kBlock, ay = by * kBlock;
                    int cx = static_cast<int>(std::lround(refx[bi]));
                    int cy = static_cast<int>(std::lround(refy[bi]));
                    double best = 1e18;
                    int best_dx = cx, best_dy = cy;
                    for (int dy = cy - kSearch; dy <= cy + kSearch; ++dy)
                        for (int dx = cx - kSearch; dx <= cx + kSearch; ++dx) {
                            int tx0 = ax + dx, ty0 = ay + dy;
                            if (tx0 < 0 || ty0 < 0 || tx0 + kBlock > B.width() ||
                                ty0 + kBlock > B.height())
                                continue;
                            double mad = block_mad(A, B, ax, ay, tx0, ty0, kBlock);
                            double ddx = dx - refx[bi], ddy = dy - refy[bi];
                            double cost =
                                mad + kLambda * std::sqrt(ddx * ddx + ddy * ddy) / dev_norm;
                            if (cost < best) {
                                best = cost;
                                best_dx = dx;
                                best_dy = dy;
                            }
                        }
                    outx[bi] = best_dx;
                    outy[bi] = best_dy;
                }
        };
        std::vector<double> ox(ix.size()), oy(ix.size());
        match_pass(ix, iy, ox, oy);
        // smoothing refinement against the neighbor average
        std::vector<double> rx(ix.size()), ry(ix.size());
        for (int by = 0; by < nby; ++by)
            for (int bx = 0; bx < nbx; ++bx) {
                double sx = 0, sy = 0;
                int n = 0;
                const int nxs[4] = {bx - 1, bx + 1, bx, bx};
                const int nys[4] = {by, by, by - 1, by + 1};
                for (int k = 0; k < 4; ++k) {
                    if (nxs[k] < 0 || nxs[k] >= nbx || nys[k] < 0 || nys[k] >= nby) continue;
                    sx += ox[static_cast<std::size_t>(nys[k]) * nbx + nxs[k]];
                    sy += oy[static_cast<std::size_t>(nys[k]) * nbx + nxs[k]];
                    ++n;
                }
                std::size_t bi = static_cast<std::size_t>(by) * nbx + bx;
                rx[bi] = n ? sx / n : ox[bi];
                ry[bi] = n ? sy / n : oy[bi];
            }
        match_pass(rx, ry, ox, oy);
        fx = std::move(ox);
        fy = std::move(oy);
        bw = nbx;
        bh = nby;
    }

    if (fx.empty()) return 0.0;
    double total = 0;
    for (std::size_t i = 0; i < fx.size(); ++i)
        total += std::sqrt(fx[i] * fx[i] + fy[i] * fy[i]);
    return total / static_cast<double>(fx.size());
}

// ---------------------------------------------------------------------------
// OCR metrics

std::size_t edit_distance(const std::string& ref, const std::string& hyp) {
    const std::size_t n = ref.size(), m = hyp.size();
    if (n == 0) return m;
    if (m == 0) return n;
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double cer(const std::string& ref, const std::string& hyp) {
    if (ref.empty()) throw std::invalid_argument("cer: empty reference");
    return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

// ---------------------------------------------------------------------------
// DLS

std::optional<double> dls(const std::vector<LayoutRegion>& regions_ref,
                          const std::vector<LayoutRegion>& regions_test,
                          double conf_threshold) {
    std::vector<const LayoutRegion*> ref, test;
    for (const auto& r : regions_ref)
        if (r.confidence >= conf_threshold) ref.push_back(&r);
    for (const auto& r : regions_test)
        if (r.confidence >= conf_threshold) test.push_back(&r);
    if (ref.empty() && test.empty()) return std::nullopt;

    struct Pair {
        double iou;
        std::size_t i, j;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < ref.size(); ++i)
        for (std::size_t j = 0; j < test.size(); ++j) {
            if (ref[i]->category != test[j]->category) continue;
            double iou = region_iou(*ref[i], *test[j]);
            if (iou > 0) pairs.push_back({iou, i, j});
        }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
    std::vector<bool> used_i(ref.size(), false), used_j(test.size(), false);
    double total = 0;
    for (const auto& p : pairs) {
        if (used_i[p.i] || used_j[p.j]) continue;
        used_i[p.i] = used_j[p.j] = true;
        total += p.iou;
    }
    return total / static_cast<double>(std::max(ref.size(), test.size()));
}

// ---------------------------------------------------------------------------
// toy layout detector

std::vector<LayoutRegion> toy_layout_detect(const RasterImage& img) {
    RasterImage gray = to_gray(img);
    const int H = gray.height(), W = gray.width();
    float thr = otsu_threshold(gray);
    auto ink = threshold_below(gray, thr);

    std::size_t ink_count = 0;
    for (auto v : ink) ink_count += v;
    if (ink_count < gray.size() / 1000) return {};  // blank page

    // merge word gaps into line blocks
    morph_close(ink, H, W, std::max(2, W / 42), 0);

    std::vector<int> labels;
    auto comps = connected_components(ink, H, W, &labels);
    std::vector<LayoutRegion> out;
    for (const auto& c : comps) {
        int bw = c.max_x - c.min_x + 1, bh = c.max_y - c.min_y + 1;
        if (c.pixels < 6 || bw < 3) continue;
        LayoutRegion r;
        double aspect = static_cast<double>(bw) / bh;
        r.category = (aspect >= 3.0 && bh <= H / 10) ? "text" : "figure";
        r.x0 = static_cast<double>(c.min_x) / W;
        r.y0 = static_cast<double>(c.min_y) / H;
        r.x1 = static_cast<double>(c.max_x + 1) / W;
        r.y1 = static_cast<double>(c.max_y + 1) / H;
        r.confidence =
            static_cast<double>(c.pixels) / (static_cast<double>(bw) * bh);
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// reporting

void MetricReport::finalize() {
    aggregates.clear();
    skipped.clear();
    struct Acc {
        double sum = 0;
        int n = 0, skip = 0;
    };
    std::map<std::string, Acc> accs;
    auto add = [&](const std::string& name, const std::optional<double>& v) {
        auto& a = accs[name];
        if (v) {
            a.sum += *v;
            ++a.n;
        } else {
            ++a.skip;
        }
    };
    for (const auto& s : samples) {
        add("msssim", s.msssim);
        add("ld_oracle", s.ld);
        add("ad_oracle", s.ad);
        add("ed", s.ed);
        add("cer", s.cer_value);
        add("dls", s.dls_value);
    }
    for (auto& [name, a] : accs) {
        if (a.n > 0) aggregates[name] = a.sum / a.n;
        if (a.skip > 0) skipped[name] = a.skip;
    }
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["aggregates"] = aggregates;
    j["skipped"] = skipped;
    j["skip_reasons"] = skip_reasons;
    j["count"] = samples.size();
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : samples) {
        nlohmann::json row{{"id", s.id}};
        auto put = [&](const char* k, const std::optional<double>& v) {
            if (v) row[k] = *v;
        };
        put("msssim", s.msssim);
        put("ld_oracle", s.ld);
        put("ad_oracle", s.ad);
        put("ed", s.ed);
        put("cer", s.cer_value);
        put("dls", s.dls_value);
        rows.push_back(std::move(row));
    }
    j["samples"] = std::move(rows);
    return j.dump(2);
}

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    os << "id,msssim,ld_oracle,ad_oracle,ed,cer,dls\n";
    auto cell = [&](const std::optional<double>& v) {
        if (v) os << *v;
    };
    for (const auto& s : samples) {
        os << s.id << ",";
        cell(s.msssim);
        os << ",";
        cell(s.ld);
        os << ",";
        cell(s.ad);
        os << ",";
        cell(s.ed);
        os << ",";
        cell(s.cer_value);
        os << ",";
        cell(s.dls_value);
        os << "\n";
    }
    return os.str();
}

}  // namespace tadoc

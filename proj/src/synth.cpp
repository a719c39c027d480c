#include "tadoc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "tadoc/errors.hpp"
#include "tadoc/metrics.hpp"
#include "tadoc/parallel.hpp"
#include "tadoc/rng.hpp"

namespace tadoc {

namespace fs = std::filesystem;

WarpSpec WarpRanges::sample(std::uint64_t seed) const {
    Rng rng(seed);
    WarpSpec s;
    s.seed = Rng::mix(seed, 0x77617270);
    s.rotation = rng.uniform(-rotation_max, rotation_max);
    s.perspective = rng.uniform(0.0, perspective_max);
    s.scale = rng.uniform(scale_min, scale_max);
    s.n_bumps = rng.uniform_int(bumps_min, bumps_max);
    s.bump_sigma = rng.uniform(bump_sigma_min, bump_sigma_max);
    s.bump_amp = rng.uniform(bump_amp_min, bump_amp_max);
    s.n_folds = rng.uniform_int(folds_min, folds_max);
    s.fold_amp = rng.uniform(fold_amp_min, fold_amp_max);
    s.fold_falloff = rng.uniform(fold_falloff_min, fold_falloff_max);
    return s;
}

namespace {

struct Bump {
    double cx, cy, sigma, du, dv;
};

struct Fold {
    double px, py, nx, ny, du, dv, falloff;
};

// Analytic flat -> distorted coordinate transform.
struct WarpField {
    double rot_cos = 1.0, rot_sin = 0.0;
    double a = 1, b = 0, c = 0, d = 0, e = 1, f = 0, g = 0, h = 0;  // homography
    std::vector<Bump> bumps;
    std::vector<Fold> folds;

    MapCoord eval(double x, double y) const {
        double rx = 0.5 + rot_cos * (x - 0.5) - rot_sin * (y - 0.5);
        double ry = 0.5 + rot_sin * (x - 0.5) + rot_cos * (y - 0.5);
        double den = g * rx + h * ry + 1.0;
        double u = (a * rx + b * ry + c) / den;
        double v = (d * rx + e * ry + f) / den;
        for (const auto& bp : bumps) {
            double dx = x - bp.cx, dy = y - bp.cy;
            double w = std::exp(-(dx * dx + dy * dy) / (2.0 * bp.sigma * bp.sigma));
            u += bp.du * w;
            v += bp.dv * w;
        }
        for (const auto& fl : folds) {
            double dist = fl.nx * (x - fl.px) + fl.ny * (y - fl.py);
            double w = std::exp(-std::abs(dist) / fl.falloff);
            u += fl.du * w;
            v += fl.dv * w;
        }
        return {u, v};
    }
};

// homography mapping the unit square to (p00, p10, p11, p01)
void square_to_quad(const MapCoord p00, const MapCoord p10, const MapCoord p11,
                    const MapCoord p01, WarpField& field) {
    double sx = p00.u - p10.u + p11.u - p01.u;
    double sy = p00.v - p10.v + p11.v - p01.v;
    double dx1 = p10.u - p11.u, dx2 = p01.u - p11.u;
    double dy1 = p10.v - p11.v, dy2 = p01.v - p11.v;
    double det = dx1 * dy2 - dx2 * dy1;
    if (std::abs(det) < 1e-12) throw GenerationFailed("degenerate corner quad");
    double g = (sx * dy2 - sy * dx2) / det;
    double h = (dx1 * sy - dy1 * sx) / det;
    field.g = g;
    field.h = h;
    field.a = p10.u - p00.u + g * p10.u;
    field.b = p01.u - p00.u + h * p01.u;
    field.c = p00.u;
    field.d = p10.v - p00.v + g * p10.v;
    field.e = p01.v - p00.v + h * p01.v;
    field.f = p00.v;
}

WarpField build_field(const WarpSpec& spec) {
    WarpField field;
    field.rot_cos = std::cos(spec.rotation);
    field.rot_sin = std::sin(spec.rotation);

    Rng rng(spec.seed);
    auto corner = [&](double cx, double cy) {
        MapCoord p;
        p.u = 0.5 + (cx - 0.5) * spec.scale + rng.uniform(-spec.perspective, spec.perspective);
        p.v = 0.5 + (cy - 0.5) * spec.scale + rng.uniform(-spec.perspective, spec.perspective);
        return p;
    };
    MapCoord p00 = corner(0, 0), p10 = corner(1, 0), p11 = corner(1, 1), p01 = corner(0, 1);
    if (spec.scale == 1.0 && spec.perspective == 0.0) {
        // exact identity homography, no floating-point residue
        field = WarpField{field.rot_cos, field.rot_sin};
    } else {
        square_to_quad(p00, p10, p11, p01, field);
    }

    for (int i = 0; i < spec.n_bumps; ++i) {
        Bump bp;
        bp.cx = rng.uniform(0.2, 0.8);
        bp.cy = rng.uniform(0.2, 0.8);
        bp.sigma = spec.bump_sigma * rng.uniform(0.7, 1.3);
        double ang = rng.uniform(0.0, 2.0 * M_PI);
        double amp = spec.bump_amp * rng.uniform(0.5, 1.0);
        bp.du = amp * std::cos(ang);
        bp.dv = amp * std::sin(ang);
        field.bumps.push_back(bp);
    }
    for (int i = 0; i < spec.n_folds; ++i) {
        Fold fl;
        fl.px = rng.uniform(0.2, 0.8);
        fl.py = rng.uniform(0.2, 0.8);
        double ang = rng.uniform(0.0, 2.0 * M_PI);
        fl.nx = std::cos(ang);
        fl.ny = std::sin(ang);
        double dang = rng.uniform(0.0, 2.0 * M_PI);
        double amp = spec.fold_amp * rng.uniform(0.5, 1.0);
        fl.du = amp * std::cos(dang);
        fl.dv = amp * std::sin(dang);
        fl.falloff = spec.fold_falloff;
        field.folds.push_back(fl);
    }
    return field;
}

BackwardMap eval_grid(const WarpField& field, int grid_h, int grid_w) {
    BackwardMap m(grid_h, grid_w);
    for (int y = 0; y < grid_h; ++y) {
        double py = (y + 0.5) / grid_h;
        for (int x = 0; x < grid_w; ++x) m.at(y, x) = field.eval((x + 0.5) / grid_w, py);
    }
    return m;
}

constexpr double kMinJacobianDet = 0.05;
constexpr int kMaxWarpRetries = 20;

// jacobian acceptance happens at the requested grid; the accepted spec is
// reported back so rendering can evaluate the same field at other sizes
WarpField accepted_field(WarpSpec spec, int grid_h, int grid_w, BackwardMap* map_out) {
    for (int k = 0; k < kMaxWarpRetries; ++k) {
        WarpField field = build_field(spec);
        BackwardMap m = eval_grid(field, grid_h, grid_w);
        if (jacobian_min_det(m) > kMinJacobianDet) {
            if (map_out) *map_out = std::move(m);
            return field;
        }
        spec.seed += 1;
    }
    throw GenerationFailed("no invertible warp after " + std::to_string(kMaxWarpRetries) +
                           " attempts");
}

}  // namespace

BackwardMap gen_warp(const WarpSpec& spec, int grid_h, int grid_w) {
    if (grid_h < 2 || grid_w < 2) throw std::invalid_argument("gen_warp: grid too small");
    BackwardMap m;
    accepted_field(spec, grid_h, grid_w, &m);
    return m;
}

// ---------------------------------------------------------------------------
// flat page generation

namespace {

constexpr int kSupersample = 2;

void fill_rect(RasterImage& img, int x0, int y0, int x1, int y1, float shade) {
    x0 = std::max(0, x0);
    y0 = std::max(0, y0);
    x1 = std::min(img.width(), x1);
    y1 = std::min(img.height(), y1);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            for (int c = 0; c < img.channels(); ++c) img.at(y, x, c) = shade;
}

std::string make_word(Rng& rng) {
    static const char* syll[] = {"ba", "be", "bi", "bo", "bu", "da", "de", "di", "do", "du",
                                 "ka", "ke", "ki", "ko", "ku", "la", "le", "li", "lo", "lu",
                                 "ma", "me", "mi", "mo", "mu", "na", "ne", "ni", "no", "nu",
                                 "ra", "re", "ri", "ro", "ru", "sa", "se", "si", "so", "su",
                                 "ta", "te", "ti", "to", "tu"};
    int n = rng.uniform_int(1, 3);
    std::string w;
    for (int i = 0; i < n; ++i) w += syll[rng.uniform_int(0, 44)];
    return w;
}

}  // namespace

FlatPage gen_flat_page(std::uint64_t seed, const PageSpec& spec) {
    if (spec.height < 32 || spec.width < 32 || spec.height % 16 != 0 || spec.width % 16 != 0)
        throw std::invalid_argument("gen_flat_page: dims must be multiples of 16 (>= 32)");

    Rng rng(seed);
    const int ss = kSupersample;
    const int Wh = spec.width * ss, Hh = spec.height * ss;
    RasterImage hi(Hh, Wh, 3, 1.0f);
    std::vector<LayoutRegion> layout;
    std::string text;

    const int mx = static_cast<int>(spec.margin * Wh);
    const int my = static_cast<int>(spec.margin * Hh);
    const int line_h = rng.uniform_int(3, 5) * ss;
    const int line_gap = rng.uniform_int(2, 4) * ss;
    const int advance = line_h + line_gap;
    const int x_left = mx, x_right = Wh - mx;
    const int y_limit = Hh - my;

    auto norm_region = [&](const std::string& cat, int x0, int y0, int x1, int y1) {
        LayoutRegion r;
        r.category = cat;
        r.x0 = static_cast<double>(x0) / Wh;
        r.y0 = static_cast<double>(y0) / Hh;
        r.x1 = static_cast<double>(x1) / Wh;
        r.y1 = static_cast<double>(y1) / Hh;
        r.confidence = 1.0;
        r.validate();
        return r;
    };

    // draws one line of word boxes, returns drawn extent or 0-width if none
    auto draw_line = [&](int y, int height, int x_start, int x_end, float ink) {
        int x = x_start;
        int first = -1, last = -1;
        while (x < x_end) {
            int wlen = rng.uniform_int(4, 14) * ss;
            if (x + wlen > x_end) {
                if (x_end - x < 3 * ss) break;
                wlen = x_end - x;
            }
            fill_rect(hi, x, y, x + wlen, y + height, ink);
            if (first < 0) first = x;
            last = x + wlen;
            if (!text.empty()) text += ' ';
            text += make_word(rng);
            x = last + rng.uniform_int(2, 4) * ss;
        }
        return std::pair<int, int>(first, last);
    };

    int y = my;

    if (rng.bernoulli(spec.title_prob)) {
        int th = static_cast<int>(line_h * 1.8);
        int tw = static_cast<int>(rng.uniform(0.35, 0.7) * (x_right - x_left));
        auto [fx, lx] = draw_line(y, th, x_left, x_left + tw, 0.03f);
        if (fx >= 0) layout.push_back(norm_region("title", fx, y, lx, y + th));
        y += th + 2 * line_gap;
    }

    int figures_left = rng.bernoulli(spec.figure_prob) ? rng.uniform_int(1, spec.max_figures) : 0;

    while (y + line_h <= y_limit) {
        bool place_figure = figures_left > 0 && rng.bernoulli(0.25);
        if (place_figure) {
            int fh = static_cast<int>(rng.uniform(0.12, 0.22) * Hh);
            int fw = static_cast<int>(rng.uniform(0.4, 0.8) * (x_right - x_left));
            if (y + fh > y_limit) {
                figures_left = 0;
                continue;
            }
            int fx = x_left + rng.uniform_int(0, std::max(0, (x_right - x_left) - fw));
            float fill = static_cast<float>(rng.uniform(0.35, 0.6));
            fill_rect(hi, fx, y, fx + fw, y + fh, fill);
            fill_rect(hi, fx, y, fx + fw, y + 1 * ss, 0.15f);
            fill_rect(hi, fx, y + fh - 1 * ss, fx + fw, y + fh, 0.15f);
            fill_rect(hi, fx, y, fx + 1 * ss, y + fh, 0.15f);
            fill_rect(hi, fx + fw - 1 * ss, y, fx + fw, y + fh, 0.15f);
            layout.push_back(norm_region("figure", fx, y, fx + fw, y + fh));
            y += fh + 2 * line_gap;
            --figures_left;
            continue;
        }
        // paragraph
        int n_lines = rng.uniform_int(3, 6);
        float ink = static_cast<float>(rng.uniform(0.02, 0.2));
        int indent = rng.uniform_int(0, 8) * ss;
        for (int li = 0; li < n_lines && y + line_h <= y_limit; ++li) {
            int x_start = x_left + (li == 0 ? indent : 0);
            int x_end = x_right;
            if (li == n_lines - 1)
                x_end = x_left + static_cast<int>(rng.uniform(0.4, 1.0) * (x_right - x_left));
            auto [fx, lx] = draw_line(y, line_h, x_start, x_end, ink);
            if (fx >= 0) layout.push_back(norm_region("text", fx, y, lx, y + line_h));
            y += advance;
        }
        y += line_gap;  // paragraph break
    }

    FlatPage page;
    page.image = gaussian_downsample2x(hi);
    page.image.clamp01();
    page.image_2x = std::move(hi);
    page.layout = std::move(layout);
    page.text = std::move(text);
    return page;
}

// ---------------------------------------------------------------------------
// rendering

namespace {

RasterImage make_noise_background(Rng& rng, int h, int w) {
    RasterImage img(h, w, 3);
    float base = static_cast<float>(rng.uniform(0.3, 0.55));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float v = base + static_cast<float>(rng.uniform(-0.12, 0.12));
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) =
                    std::clamp(v + static_cast<float>(rng.uniform(-0.03, 0.03)), 0.0f, 1.0f);
        }
    return img;
}

constexpr double kRoundTripMsSsim = 0.95;

}  // namespace

DocumentSample render_sample(const FlatPage& page, const WarpSpec& spec) {
    const int H = page.image.height(), W = page.image.width();
    const int ss = kSupersample;
    const int Hh = H * ss, Wh = W * ss;

    // render from the full-resolution original when available
    RasterImage flat_hi =
        (page.image_2x.height() == Hh && page.image_2x.width() == Wh)
            ? page.image_2x
            : resize_bilinear(page.image, Hh, Wh);

    WarpSpec attempt = spec;
    for (int k = 0; k < kMaxWarpRetries; ++k) {
        BackwardMap gt_map;
        WarpField field = accepted_field(attempt, H, W, &gt_map);

        BackwardMap warp_hi = eval_grid(field, Hh, Wh);
        InvertResult inv = invert_map(warp_hi, 1e-4, 60);

        Rng noise_rng(Rng::mix(attempt.seed, 0x6e6f6973));
        RasterImage noise = make_noise_background(noise_rng, Hh, Wh);

        // footprint: preimage lands inside the unit square
        std::vector<std::uint8_t> inside(inv.map.cells(), 0);
        for (std::size_t i = 0; i < inv.map.cells(); ++i) {
            const MapCoord& c = inv.map.data()[i];
            bool ok = inv.converged[i] && c.u >= 0.0 && c.u <= 1.0 && c.v >= 0.0 && c.v <= 1.0;
            inside[i] = ok ? 1 : 0;
        }
        // clamp stray preimages into the sampler's tolerated range
        BackwardMap sample_map = inv.map;
        for (std::size_t i = 0; i < sample_map.cells(); ++i) {
            sample_map.data()[i].u = std::clamp(sample_map.data()[i].u, -0.2, 1.2);
            sample_map.data()[i].v = std::clamp(sample_map.data()[i].v, -0.2, 1.2);
        }
        RasterImage page_pull = sample_bilinear(flat_hi, sample_map);
        RasterImage distorted_hi(Hh, Wh, 3);
        RasterImage mask_hi(Hh, Wh, 1);
        for (int y = 0; y < Hh; ++y)
            for (int x = 0; x < Wh; ++x) {
                bool in = inside[static_cast<std::size_t>(y) * Wh + x];
                mask_hi.at(y, x) = in ? 1.0f : 0.0f;
                for (int c = 0; c < 3; ++c)
                    distorted_hi.at(y, x, c) = in ? page_pull.at(y, x, c) : noise.at(y, x, c);
            }

        DocumentSample s;
        s.flat = page.image;
        s.distorted = gaussian_downsample2x(distorted_hi);
        s.distorted.clamp01();
        RasterImage mask_soft = gaussian_downsample2x(mask_hi);
        s.mask = RasterImage(H, W, 1);
        for (std::size_t i = 0; i < s.mask.size(); ++i)
            s.mask.data()[i] = mask_soft.data()[i] >= 0.5f ? 1.0f : 0.0f;
        s.gt_map = std::move(gt_map);
        s.layout = page.layout;
        s.text = page.text;

        RasterImage dewarped = sample_bilinear(s.distorted, s.gt_map);
        if (ms_ssim(dewarped, s.flat) > kRoundTripMsSsim) return s;
        attempt.seed += 1;
    }
    throw GenerationFailed("no sample passing the round-trip check after " +
                           std::to_string(kMaxWarpRetries) + " attempts");
}

std::string build_dataset(int n, const std::string& out_dir, std::uint64_t global_seed,
                          const PageSpec& page_spec, const WarpRanges& ranges) {
    if (n < 0) throw std::invalid_argument("build_dataset: negative count");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + out_dir + ": " + ec.message());

    std::vector<ManifestEntry> entries(static_cast<std::size_t>(n));
    parallel_for(
        n,
        [&](std::int64_t i0, std::int64_t i1) {
            for (std::int64_t i = i0; i < i1; ++i) {
                std::uint64_t stream = Rng::mix(global_seed, static_cast<std::uint64_t>(i));
                FlatPage page = gen_flat_page(Rng::mix(stream, 1), page_spec);
                WarpSpec ws = ranges.sample(Rng::mix(stream, 2));
                DocumentSample sample = render_sample(page, ws);

                char id[16];
                std::snprintf(id, sizeof id, "%06lld", static_cast<long long>(i));
                ManifestEntry e;
                e.id = id;
                e.distorted = e.id + "_distorted.png";
                e.flat = e.id + "_flat.png";
                e.mask = e.id + "_mask.pgm";
                e.map = e.id + "_map.bmap";
                e.layout = e.id + "_layout.json";
                e.text = e.id + "_text.txt";
                save_sample_files(sample, out_dir, e);
                entries[static_cast<std::size_t>(i)] = std::move(e);
            }
        },
        1);

    std::string manifest = (fs::path(out_dir) / "manifest.jsonl").string();
    save_manifest(entries, manifest);
    return manifest;
}

}  // namespace tadoc

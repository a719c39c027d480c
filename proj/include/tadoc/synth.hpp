#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tadoc/backward_map.hpp"
#include "tadoc/dataset.hpp"
#include "tadoc/image.hpp"
#include "tadoc/layout.hpp"

namespace tadoc {

// One concrete distortion. The analytic warp maps flat-page coordinates to
// distorted-image coordinates: a rotation about the page center, a mild
// projective transform that also scales the page into the frame, plus
// Gaussian displacement bumps and exponentially decaying fold creases.
struct WarpSpec {
    std::uint64_t seed = 0;
    double rotation = 0.0;     // radians
    double perspective = 0.0;  // 4-corner jitter magnitude, normalized
    double scale = 1.0;        // inward scale about the center
    int n_bumps = 0;
    double bump_sigma = 0.15;  // normalized width
    double bump_amp = 0.0;     // normalized amplitude
    int n_folds = 0;
    double fold_amp = 0.0;
    double fold_falloff = 0.1;
};

// Uniform sampling ranges for WarpSpec; the desk-scale stand-in for a real
// photographed-document distortion distribution.
struct WarpRanges {
    double rotation_max = 0.12;
    double perspective_max = 0.05;
    double scale_min = 0.80, scale_max = 0.92;
    int bumps_min = 1, bumps_max = 3;
    double bump_sigma_min = 0.12, bump_sigma_max = 0.25;
    double bump_amp_min = 0.005, bump_amp_max = 0.025;
    int folds_min = 0, folds_max = 2;
    double fold_amp_min = 0.004, fold_amp_max = 0.015;
    double fold_falloff_min = 0.06, fold_falloff_max = 0.15;

    WarpSpec sample(std::uint64_t seed) const;
};

struct PageSpec {
    int height = 128, width = 128;  // multiples of 16
    double margin = 0.08;
    double title_prob = 0.7;
    double figure_prob = 0.55;  // chance of any figures; count then 1..max
    int max_figures = 3;
};

struct FlatPage {
    RasterImage image;     // RGB, page resolution
    RasterImage image_2x;  // render-resolution original, kept for the renderer
    std::vector<LayoutRegion> layout;
    std::string text;
};

FlatPage gen_flat_page(std::uint64_t seed, const PageSpec& spec);

// Evaluates the warp on a grid_h x grid_w cell-center grid. Rejects and
// re-seeds (seed+1, up to 20 tries) until jacobian_min_det > 0.05; throws
// GenerationFailed when the budget is exhausted.
BackwardMap gen_warp(const WarpSpec& spec, int grid_h, int grid_w);

// Renders the photographed page: distorted(p) = flat(invert(f_T)(p)) inside
// the warped footprint, gray noise outside; the mask is the footprint and
// gt_map is f_T. Rendering happens at 2x resolution and is box-filtered
// down. Enforces the round-trip self check (MS-SSIM > 0.95) by re-seeding
// the warp like gen_warp does.
DocumentSample render_sample(const FlatPage& page, const WarpSpec& spec);

// Writes n samples plus a JSON-lines manifest; byte-reproducible from
// global_seed (per-sample streams are hash(global_seed, index)).
std::string build_dataset(int n, const std::string& out_dir, std::uint64_t global_seed,
                          const PageSpec& page_spec, const WarpRanges& ranges);

}  // namespace tadoc

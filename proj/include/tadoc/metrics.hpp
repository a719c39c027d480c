#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tadoc/backward_map.hpp"
#include "tadoc/image.hpp"
#include "tadoc/layout.hpp"

namespace tadoc {

// Multi-scale SSIM, up to 5 levels with weights (0.0448, 0.2856, 0.3001,
// 0.2363, 0.1333), 11x11 Gaussian window sigma 1.5, C1 = 0.01^2,
// C2 = 0.03^2 on [0,1] inputs. RGB converts via luminance. When the smaller
// dimension cannot support 5 levels (min dim < 176) the level count drops
// and the weights renormalize. The luminance term enters at the coarsest
// level only; finer levels contribute contrast/structure.
double ms_ssim(const RasterImage& a, const RasterImage& b);

// Mean displacement in pixels between where content sits and where it
// belongs, from exact map algebra: r(p) = denorm(inv_gt(pred(p))) - p over
// an out_h x out_w grid, masked to the document interior (margin cells and
// non-converged inversions excluded).
double ld_oracle(const BackwardMap& pred_map, const BackwardMap& gt_map, int out_h, int out_w,
                 int interior_margin = 2);

// Registration-based LD estimate: 3-level pyramid, 8x8 block matching over
// +-4 px with a lambda = 0.5 neighbor-smoothness penalty. An approximation
// for real image pairs; acceptance relies on ld_oracle.
double ld_registration(const RasterImage& a, const RasterImage& b);

// Aligned distortion: fits one global (scale, translation) to the residual
// correspondence, weighted by flat-image gradient magnitude (+1e-3), and
// reports the weighted mean residual normalized by the image diagonal.
// Empty weight mass yields nullopt (metric skipped).
std::optional<double> ad_oracle(const BackwardMap& pred_map, const BackwardMap& gt_map,
                                const RasterImage& flat_image, int out_h, int out_w,
                                int interior_margin = 2);

// Levenshtein distance with unit costs; cer = ED / |ref| and may exceed 1.
std::size_t edit_distance(const std::string& ref, const std::string& hyp);
double cer(const std::string& ref, const std::string& hyp);

// Document layout similarity: confidence-filter both lists (threshold
// applies to both), greedy IoU matching within each category, sum of
// matched IoU divided by max(kept ref, kept test). Both-empty -> nullopt.
std::optional<double> dls(const std::vector<LayoutRegion>& regions_ref,
                          const std::vector<LayoutRegion>& regions_test,
                          double conf_threshold = 0.5);

// Stand-in layout analyzer: Otsu binarization, wide horizontal closing,
// connected components; high-aspect components become "text", blocky ones
// "figure"; confidence is the component fill ratio inside its box.
std::vector<LayoutRegion> toy_layout_detect(const RasterImage& img);

// Per-sample metric row; missing values were skipped.
struct SampleMetrics {
    std::string id;
    std::optional<double> msssim, ld, ad, ed, cer_value, dls_value;
};

struct MetricReport {
    std::vector<SampleMetrics> samples;
    std::map<std::string, double> aggregates;            // means over non-skipped
    std::map<std::string, int> skipped;                  // metric -> count
    std::map<std::string, std::string> skip_reasons;     // metric -> reason

    void finalize();  // fills aggregates/skipped from samples
    std::string to_json() const;
    std::string to_csv() const;
};

}  // namespace tadoc

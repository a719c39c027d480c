#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tadoc {

/*
Coordinate conventions:
  All map coordinates are normalized to [0,1]^2 with the pixel-center rule:
  the center of pixel (row y, col x) of an HxW grid sits at
  ((x + 0.5) / W, (y + 0.5) / H).

  A backward map is a field over the flat (output) grid: cell p holds the
  source coordinate in the distorted image whose content belongs at p.
  Dewarping therefore samples the distorted image through the map.

  Time steps: t = 0 is the distorted state (identity map), t = T the fully
  flat state. Intermediate maps lie on the straight segment between the two.
*/

struct MapCoord {
    double u = 0.0;
    double v = 0.0;
};

struct TimeStep {
    int t = 0;
    int total = 1;  // T

    // throws std::invalid_argument unless 0 <= t <= total and total >= 1
    void validate() const;
    double fraction() const { return static_cast<double>(t) / static_cast<double>(total); }
};

class BackwardMap {
public:
    BackwardMap() = default;
    BackwardMap(int height, int width);  // zero-filled

    static BackwardMap identity(int height, int width);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t cells() const { return data_.size(); }

    MapCoord& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const MapCoord& at(int y, int x) const {
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }
    MapCoord* data() { return data_.data(); }
    const MapCoord* data() const { return data_.data(); }

    bool same_shape(const BackwardMap& o) const {
        return height_ == o.height_ && width_ == o.width_;
    }
    bool all_finite() const;
    // all coordinates within [-0.25, 1.25]; the sampler clamps the slack
    bool valid_for_sampling() const;

    // Bilinear evaluation of the field at a normalized point, clamped to
    // [0,1]^2. This is what map composition uses.
    MapCoord eval(double u, double v) const;

    // Evaluation that extrapolates linearly beyond the grid instead of
    // clamping; inversion needs this to chase preimages that fall outside
    // the unit square.
    MapCoord eval_extrapolated(double u, double v) const;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<MapCoord> data_;
};

BackwardMap identity_grid(int height, int width);

// f_t = f_0 + (t/T) * (f_T - f_0), cellwise. t = 0 gives the identity grid,
// t = T returns f_T unchanged.
BackwardMap interpolate_map(const BackwardMap& f_T, TimeStep ts);

// fhat_T = f_0 + (T/t) * (fhat_t - f_0); exact algebraic inverse of
// interpolate_map for every t >= 1. t = 0 is rejected.
BackwardMap recover_final(const BackwardMap& f_t_hat, TimeStep ts);

// Cellwise arithmetic mean, accumulated left to right for bit-determinism.
BackwardMap average_final(const std::vector<BackwardMap>& maps);

// result(p) = inner evaluated bilinearly at outer(p).
BackwardMap compose_maps(const BackwardMap& outer, const BackwardMap& inner);

struct InvertResult {
    BackwardMap map;
    std::vector<std::uint8_t> converged;  // per cell, row-major
    double failure_ratio = 0.0;
};

// Solves m(n(p)) = p per cell by damped fixed-point iteration (step 0.8).
// Throws InversionFailed when more than 1% of cells miss `tol`.
InvertResult invert_map(const BackwardMap& m, double tol = 1e-4, int max_iters = 50);

// Minimum over interior cells of det(J) of the map in normalized
// coordinates, by central finite differences. Identity yields 1.
double jacobian_min_det(const BackwardMap& m);

// BMAP container: "TABM", version u16 = 1, height u32, width u32, then
// height*width little-endian float32 (u, v) pairs, row-major.
void save_bmap(const BackwardMap& m, const std::string& path);
BackwardMap load_bmap(const std::string& path);
std::vector<std::uint8_t> encode_bmap(const BackwardMap& m);
BackwardMap decode_bmap(const std::uint8_t* bytes, std::size_t size);

}  // namespace tadoc

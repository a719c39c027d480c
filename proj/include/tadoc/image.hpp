#pragma once

#include <vector>

#include "tadoc/backward_map.hpp"

namespace tadoc {

// Grayscale (1 channel) or RGB (3 channel) pixel grid in [0,1], row-major,
// channel-interleaved, float32 throughout.
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int height, int width, int channels, float fill = 0.0f);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return pixels_.size(); }

    float& at(int y, int x, int c = 0) {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    float at(int y, int x, int c = 0) const {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    float* data() { return pixels_.data(); }
    const float* data() const { return pixels_.data(); }

    bool same_shape(const RasterImage& o) const {
        return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
    }
    void clamp01();
    bool all_finite() const;

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<float> pixels_;
};

// out(p) = bilinear read of src at the denormalized map(p), clamp-to-edge.
// Output dimensions equal the map dimensions. When the map is bitwise equal
// to the identity grid the source is returned unchanged.
RasterImage sample_bilinear(const RasterImage& src, const BackwardMap& map);

// Treats the two map channels as images and resizes with pixel-center
// alignment. Unlike image resizing this extrapolates linearly at the
// borders, so affine fields (the identity grid in particular) are
// reproduced exactly at any output size. Downscaling is rejected.
BackwardMap upsample_map_bilinear(const BackwardMap& sparse, int out_h, int out_w);

RasterImage resize_bilinear(const RasterImage& img, int out_h, int out_w);

// 5-tap [1,4,6,4,1]/16 separable blur followed by 2x decimation.
RasterImage gaussian_downsample2x(const RasterImage& img);

// Luminance conversion (0.299, 0.587, 0.114); grayscale input passes through.
RasterImage to_gray(const RasterImage& img);

}  // namespace tadoc

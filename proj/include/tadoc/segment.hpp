#pragma once

#include <cstdint>
#include <vector>

#include "tadoc/image.hpp"

namespace tadoc {

// Binary-image helpers shared by the mask estimator and the toy layout
// detector. Masks are row-major uint8 (0/1).

float otsu_threshold(const RasterImage& gray);

std::vector<std::uint8_t> threshold_above(const RasterImage& gray, float thresh);
std::vector<std::uint8_t> threshold_below(const RasterImage& gray, float thresh);

struct Component {
    int label = 0;
    int min_x = 0, min_y = 0, max_x = 0, max_y = 0;  // inclusive
    std::size_t pixels = 0;
};

// 4-connected labeling; labels[i] == 0 means background.
std::vector<Component> connected_components(const std::vector<std::uint8_t>& mask, int h, int w,
                                            std::vector<int>* labels_out = nullptr);

void keep_largest_component(std::vector<std::uint8_t>& mask, int h, int w);

// Fills regions of zeros not reachable from the border.
void fill_holes(std::vector<std::uint8_t>& mask, int h, int w);

// Dilation then erosion with a (2*rx+1) x (2*ry+1) rectangle.
void morph_close(std::vector<std::uint8_t>& mask, int h, int w, int rx, int ry);

// 0/1 mask to a softened [0,1] image (3x3 box blur).
RasterImage mask_to_soft_image(const std::vector<std::uint8_t>& mask, int h, int w);

}  // namespace tadoc

#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "tadoc/backward_map.hpp"
#include "tadoc/image.hpp"
#include "tadoc/rng.hpp"

namespace testutil {

// Random smooth map: identity plus low-frequency sinusoidal displacement,
// tapered to exactly zero at the border cells so coordinates stay inside
// the interpolable range. Small amplitudes keep it a diffeomorphism.
inline tadoc::BackwardMap random_smooth_map(tadoc::Rng& rng, int h, int w,
                                            double amplitude = 0.05) {
    tadoc::BackwardMap m = tadoc::identity_grid(h, w);
    double au = rng.uniform(-amplitude, amplitude);
    double av = rng.uniform(-amplitude, amplitude);
    double fu = rng.uniform(0.5, 2.0), fv = rng.uniform(0.5, 2.0);
    double pu = rng.uniform(0.0, 6.28), pv = rng.uniform(0.0, 6.28);
    for (int y = 0; y < h; ++y) {
        double ty = h > 1 ? std::sin(M_PI * y / (h - 1)) : 0.0;
        for (int x = 0; x < w; ++x) {
            double taper = ty * (w > 1 ? std::sin(M_PI * x / (w - 1)) : 0.0);
            auto& c = m.at(y, x);
            c.u += taper * au * std::sin(2 * M_PI * fu * c.v + pu);
            c.v += taper * av * std::sin(2 * M_PI * fv * c.u + pv);
        }
    }
    return m;
}

// Arbitrary (not necessarily smooth) map with coordinates in [0,1].
inline tadoc::BackwardMap random_map(tadoc::Rng& rng, int h, int w) {
    tadoc::BackwardMap m(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.at(y, x) = {rng.uniform(), rng.uniform()};
    return m;
}

inline tadoc::RasterImage random_image(tadoc::Rng& rng, int h, int w, int c) {
    tadoc::RasterImage img(h, w, c);
    for (std::size_t i = 0; i < img.size(); ++i)
        img.data()[i] = static_cast<float>(rng.uniform());
    return img;
}

inline double max_map_diff(const tadoc::BackwardMap& a, const tadoc::BackwardMap& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.cells(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i].u - b.data()[i].u));
        worst = std::max(worst, std::abs(a.data()[i].v - b.data()[i].v));
    }
    return worst;
}

inline double max_image_diff(const tadoc::RasterImage& a, const tadoc::RasterImage& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
    return worst;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("tadoc_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace testutil

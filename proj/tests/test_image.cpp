#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "tadoc/backward_map.hpp"
#include "tadoc/errors.hpp"
#include "tadoc/image.hpp"
#include "tadoc/image_io.hpp"

using namespace tadoc;

TEST_CASE("sample_bilinear identity reproduces the source exactly") {
    Rng rng(2);
    auto img = testutil::random_image(rng, 24, 17, 3);
    auto out = sample_bilinear(img, identity_grid(24, 17));
    CHECK(testutil::max_image_diff(out, img) == 0.0);
}

TEST_CASE("sample_bilinear constants and midpoint hand case") {
    RasterImage c(9, 7, 1, 0.42f);
    Rng rng(4);
    auto m = testutil::random_smooth_map(rng, 9, 7, 0.1);
    auto out = sample_bilinear(c, m);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out.data()[i] == doctest::Approx(0.42f).epsilon(1e-6));

    // 1x2 gray image [0, 1]; map cell (0.5, 0.5) sits midway between the
    // two pixel centers, so the bilinear read is 0.5
    RasterImage two(1, 2, 1);
    two.at(0, 0) = 0.0f;
    two.at(0, 1) = 1.0f;
    BackwardMap mid(1, 1);
    mid.at(0, 0) = {0.5, 0.5};
    auto r = sample_bilinear(two, mid);
    CHECK(r.at(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("sample_bilinear linearity and range preservation") {
    Rng rng(6);
    auto a = testutil::random_image(rng, 12, 12, 1);
    auto b = testutil::random_image(rng, 12, 12, 1);
    auto m = testutil::random_smooth_map(rng, 12, 12, 0.08);

    RasterImage mix(12, 12, 1);
    for (std::size_t i = 0; i < mix.size(); ++i)
        mix.data()[i] = 0.3f * a.data()[i] + 0.7f * b.data()[i];
    auto sm = sample_bilinear(mix, m);
    auto sa = sample_bilinear(a, m);
    auto sb = sample_bilinear(b, m);
    for (std::size_t i = 0; i < sm.size(); ++i)
        CHECK(sm.data()[i] ==
              doctest::Approx(0.3f * sa.data()[i] + 0.7f * sb.data()[i]).epsilon(1e-6));

    float lo = 1.f, hi = 0.f;
    for (std::size_t i = 0; i < a.size(); ++i) {
        lo = std::min(lo, a.data()[i]);
        hi = std::max(hi, a.data()[i]);
    }
    for (std::size_t i = 0; i < sa.size(); ++i) {
        CHECK(sa.data()[i] >= lo - 1e-6f);
        CHECK(sa.data()[i] <= hi + 1e-6f);
    }
}

TEST_CASE("sample_bilinear rejects wild maps") {
    RasterImage img(4, 4, 1, 0.5f);
    BackwardMap m(4, 4);
    m.at(2, 2) = {2.0, 0.5};  // outside the sampling slack
    CHECK_THROWS_AS(sample_bilinear(img, m), std::invalid_argument);
}

TEST_CASE("upsample_map_bilinear reproduces affine fields") {
    auto sparse_id = identity_grid(8, 8);
    auto dense = upsample_map_bilinear(sparse_id, 128, 128);
    CHECK(testutil::max_map_diff(dense, identity_grid(128, 128)) < 1e-6);

    BackwardMap constant(4, 4);
    for (std::size_t i = 0; i < constant.cells(); ++i) constant.data()[i] = {0.3, 0.7};
    auto dc = upsample_map_bilinear(constant, 64, 64);
    for (std::size_t i = 0; i < dc.cells(); ++i) {
        CHECK(dc.data()[i].u == doctest::Approx(0.3).epsilon(1e-9));
        CHECK(dc.data()[i].v == doctest::Approx(0.7).epsilon(1e-9));
    }

    // 2x2 sparse with linearly varying u reproduces the analytic ramp
    BackwardMap ramp(2, 2);
    ramp.at(0, 0) = {0.2, 0.5};
    ramp.at(0, 1) = {0.8, 0.5};
    ramp.at(1, 0) = {0.2, 0.5};
    ramp.at(1, 1) = {0.8, 0.5};
    auto dr = upsample_map_bilinear(ramp, 16, 16);
    for (int x = 0; x < 16; ++x) {
        // sparse centers at u = 0.2 (x=0.25 in cell units) and 0.8 (x=0.75),
        // so u(x) = 0.2 + 0.6 * ((x+0.5)/16*2 - 0.5)
        double expected = 0.2 + 0.6 * ((x + 0.5) / 8.0 - 0.5);
        CHECK(dr.at(7, x).u == doctest::Approx(expected).epsilon(1e-9));
    }

    CHECK_THROWS_AS(upsample_map_bilinear(sparse_id, 4, 16), std::invalid_argument);
}

TEST_CASE("resize and gaussian_downsample2x") {
    Rng rng(8);
    auto img = testutil::random_image(rng, 10, 14, 3);
    auto same = resize_bilinear(img, 10, 14);
    CHECK(testutil::max_image_diff(same, img) == 0.0);
    CHECK_THROWS_AS(resize_bilinear(img, 0, 14), std::invalid_argument);

    RasterImage c(8, 8, 1, 0.37f);
    auto down = gaussian_downsample2x(c);
    CHECK(down.height() == 4);
    for (std::size_t i = 0; i < down.size(); ++i)
        CHECK(down.data()[i] == doctest::Approx(0.37f).epsilon(1e-6));

    // per-pixel checkerboard blurs to exactly 0.5 under the symmetric kernel
    RasterImage cb(4, 4, 1);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) cb.at(y, x) = ((x + y) % 2) ? 1.0f : 0.0f;
    auto flat = gaussian_downsample2x(cb);
    for (std::size_t i = 0; i < flat.size(); ++i)
        CHECK(flat.data()[i] == doctest::Approx(0.5f).epsilon(1e-6));
}

TEST_CASE("PGM parsing hand case") {
    testutil::TempDir dir("pnm");
    {
        std::ofstream f(dir.file("t.pgm"), std::ios::binary);
        f << "P5 2 1 255\n";
        f.put(static_cast<char>(0));
        f.put(static_cast<char>(255));
    }
    auto img = load_image(dir.file("t.pgm"));
    CHECK(img.width() == 2);
    CHECK(img.height() == 1);
    CHECK(img.at(0, 0) == doctest::Approx(0.0));
    CHECK(img.at(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("PNM malformed inputs carry byte offsets") {
    testutil::TempDir dir("pnm_bad");
    {
        std::ofstream f(dir.file("trunc.pgm"), std::ios::binary);
        f << "P5 4 4 255\n";
        f.put(static_cast<char>(7));  // far too few payload bytes
    }
    CHECK_THROWS_AS(load_image(dir.file("trunc.pgm")), ParseError);
    {
        std::ofstream f(dir.file("bad.pgm"), std::ios::binary);
        f << "P9 2 2 255\n";
    }
    CHECK_THROWS_AS(load_image(dir.file("bad.pgm")), ParseError);
    {
        std::ofstream f(dir.file("depth.pgm"), std::ios::binary);
        f << "P5 2 2 65535\n";
    }
    CHECK_THROWS_AS(load_image(dir.file("depth.pgm")), UnsupportedFormat);
}

TEST_CASE("PNG and PNM round trips through 8-bit quantization") {
    testutil::TempDir dir("img_rt");
    Rng rng(10);
    for (int channels : {1, 3}) {
        auto img = testutil::random_image(rng, 13, 9, channels);
        // snap to the 8-bit lattice so save/load is lossless
        for (std::size_t i = 0; i < img.size(); ++i)
            img.data()[i] = std::round(img.data()[i] * 255.0f) / 255.0f;

        std::string png = dir.file("rt" + std::to_string(channels) + ".png");
        save_image(img, png);
        CHECK(testutil::max_image_diff(load_image(png), img) < 1e-6);

        std::string pnm = dir.file(channels == 1 ? "rt.pgm" : "rt.ppm");
        save_image(img, pnm);
        CHECK(testutil::max_image_diff(load_image(pnm), img) < 1e-6);
    }
    CHECK_THROWS_AS(load_image(dir.file("missing.png")), std::runtime_error);
    CHECK_THROWS_AS(save_image(RasterImage(2, 2, 1), dir.file("x.bmp")), UnsupportedFormat);
}

TEST_CASE("to_gray luminance") {
    RasterImage rgb(1, 1, 3);
    rgb.at(0, 0, 0) = 1.0f;
    rgb.at(0, 0, 1) = 0.0f;
    rgb.at(0, 0, 2) = 0.0f;
    CHECK(to_gray(rgb).at(0, 0) == doctest::Approx(0.299));
}

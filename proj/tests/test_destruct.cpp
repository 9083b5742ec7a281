#include <doctest.h>

#include <array>
#include <cmath>

#include "test_support.hpp"
#include "transfuse/destruct.hpp"

using namespace transfuse;

TEST_SUITE_BEGIN("destruct");

TEST_CASE("sample_subregions respects bounds and determinism") {
    TransformSpec spec;
    spec.n_subregions = 4;
    spec.subregion_size = 16;

    Rng rng(42);
    const auto rects = sample_subregions(256, 256, spec, rng);
    REQUIRE(rects.size() == 4);
    for (const Subregion& r : rects) {
        CHECK(r.height == 16);
        CHECK(r.width == 16);
        CHECK(r.top >= 0);
        CHECK(r.left >= 0);
        CHECK(r.top <= 240);
        CHECK(r.left <= 240);
    }

    Rng rng2(42);
    const auto rects2 = sample_subregions(256, 256, spec, rng2);
    for (std::size_t i = 0; i < rects.size(); ++i) {
        CHECK(rects[i].top == rects2[i].top);
        CHECK(rects[i].left == rects2[i].left);
    }

    spec.n_subregions = 1;
    Rng rng3(7);
    const auto single = sample_subregions(16, 16, spec, rng3);
    CHECK(single[0].top == 0);
    CHECK(single[0].left == 0);

    spec.subregion_size = 32;
    Rng rng4(7);
    CHECK_THROWS_AS(sample_subregions(16, 16, spec, rng4), ConfigError);
}

TEST_CASE("identity bezier map is the identity") {
    const BezierMap m = make_bezier_map_from_points({0.0, 0.0}, {1.0, 1.0}, false, 1024);
    for (int i = 0; i <= 1000; ++i) {
        const double v = i / 1000.0;
        CHECK(m.apply(v) == doctest::Approx(v).epsilon(1e-9));
    }
}

TEST_CASE("symmetric midpoints map 0.5 to 0.5") {
    const BezierMap m = make_bezier_map_from_points({0.25, 0.75}, {0.75, 0.25}, false, 1024);
    CHECK(m.apply(0.5) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("lut endpoints and monotonicity") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::array<double, 2> p2{rng.uniform(), rng.uniform()};
        const std::array<double, 2> p3{rng.uniform(), rng.uniform()};
        const BezierMap inc = make_bezier_map_from_points(p2, p3, false, 256);
        CHECK(inc.lut.front() == 0.0);
        CHECK(inc.lut.back() == 1.0);
        for (std::size_t i = 1; i < inc.lut.size(); ++i)
            CHECK(inc.lut[i] >= inc.lut[i - 1] - 1e-12);

        const BezierMap dec = make_bezier_map_from_points(p2, p3, true, 256);
        for (std::size_t i = 1; i < dec.lut.size(); ++i)
            CHECK(dec.lut[i] <= dec.lut[i - 1] + 1e-12);
    }
}

TEST_CASE("apply_nonlinear pointwise behavior") {
    Rng rng(4);
    const Image region = test_support::random_image(8, 8, rng);

    const BezierMap ident = make_bezier_map_from_points({0.0, 0.0}, {1.0, 1.0}, false, 1024);
    const Image same = apply_nonlinear(region, ident);
    for (int i = 0; i < region.numel(); ++i)
        CHECK(same.pix[i] == doctest::Approx(region.pix[i]).epsilon(1e-9));

    const BezierMap flip = make_bezier_map_from_points({0.0, 0.0}, {1.0, 1.0}, true, 1024);
    Image point = Image::constant(1, 1, 0.2);
    CHECK(apply_nonlinear(point, flip).at(0, 0) == doctest::Approx(0.8).epsilon(1e-9));

    Rng rng2(5);
    const BezierMap any = make_bezier_map(rng2, 1024);
    const Image constant = Image::constant(4, 4, 0.3);
    const Image mapped = apply_nonlinear(constant, any);
    for (const double v : mapped.pix)
        CHECK(v == doctest::Approx(any.apply(0.3)).epsilon(1e-12));
}

TEST_CASE("gamma transform values and inverse") {
    Image half = Image::constant(1, 1, 0.5);
    CHECK(apply_brightness(half, 3.0).at(0, 0) == doctest::Approx(0.125).epsilon(1e-12));
    // exp(0.3 * ln 0.5), evaluated independently
    const double expected = std::exp(0.3 * std::log(0.5));
    CHECK(apply_brightness(half, 0.3).at(0, 0) == doctest::Approx(expected).epsilon(1e-12));

    Rng rng(6);
    const Image region = test_support::random_image(6, 6, rng);
    const Image same = apply_brightness(region, 1.0);
    CHECK(same.pix == region.pix);

    const Image round = apply_brightness(apply_brightness(region, 3.0), 1.0 / 3.0);
    for (int i = 0; i < region.numel(); ++i)
        CHECK(round.pix[i] == doctest::Approx(region.pix[i]).epsilon(1e-6));

    CHECK_THROWS_AS(apply_brightness(region, 0.0), ConfigError);
}

TEST_CASE("gaussian blur preserves constants and kernel is normalized") {
    const Image c = Image::constant(20, 20, 0.7);
    const Image blurred = apply_noise(c, 3.0);
    for (const double v : blurred.pix) CHECK(v == doctest::Approx(0.7).epsilon(1e-9));

    const auto k1 = gaussian_kernel_1d(3.0);
    CHECK(k1.size() == 19);  // radius ceil(3*3) = 9
    double sum2d = 0.0;
    for (const double a : k1)
        for (const double b : k1) sum2d += a * b;
    CHECK(sum2d == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("single bright pixel spreads to the peak kernel weight") {
    const double sigma = 1.0;
    Image field = Image::constant(15, 15, 0.0);
    field.at(7, 7) = 1.0;
    const Image blurred = apply_noise(field, sigma);

    // Independent evaluation of the normalized Gaussian at the origin.
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) sum += std::exp(-i * i / (2.0 * sigma * sigma));
    const double center_weight = (1.0 / sum) * (1.0 / sum);
    CHECK(blurred.at(7, 7) == doctest::Approx(center_weight).epsilon(1e-9));
}

TEST_CASE("destroy honors zero and one probabilities") {
    Rng img_rng(10);
    const Image img = test_support::random_image(64, 64, img_rng);

    TransformSpec spec;
    spec.n_subregions = 4;
    spec.subregion_size = 16;
    spec.prob_nonlinear = spec.prob_brightness = spec.prob_noise = 0.0;
    Rng rng(1);
    const auto [unchanged, rec0] = destroy(img, spec, rng);
    CHECK(unchanged.pix == img.pix);
    for (const auto& e : rec0.entries) {
        CHECK_FALSE(e.nonlinear);
        CHECK_FALSE(e.brightness);
        CHECK_FALSE(e.noise);
    }

    spec.prob_nonlinear = spec.prob_brightness = spec.prob_noise = 1.0;
    Rng rng2(2);
    const auto [all, rec1] = destroy(img, spec, rng2);
    REQUIRE(rec1.entries.size() == 4);
    for (const auto& e : rec1.entries) {
        CHECK(e.nonlinear);
        CHECK(e.brightness);
        CHECK(e.noise);
    }
}

TEST_CASE("pixels outside subregions are bit-identical") {
    Rng img_rng(20);
    const Image img = test_support::random_image(48, 48, img_rng);
    TransformSpec spec;
    spec.n_subregions = 3;
    spec.subregion_size = 12;
    Rng rng(77);
    const auto [out, rec] = destroy(img, spec, rng);

    std::vector<bool> touched(static_cast<std::size_t>(img.numel()), false);
    for (const auto& e : rec.entries)
        for (int y = e.region.top; y < e.region.top + e.region.height; ++y)
            for (int x = e.region.left; x < e.region.left + e.region.width; ++x)
                touched[static_cast<std::size_t>(y) * img.width + x] = true;
    for (int i = 0; i < img.numel(); ++i)
        if (!touched[static_cast<std::size_t>(i)]) CHECK(out.pix[i] == img.pix[i]);
}

TEST_CASE("destroy is deterministic in the seed") {
    Rng img_rng(30);
    const Image img = test_support::random_image(40, 40, img_rng);
    TransformSpec spec;
    spec.n_subregions = 2;
    spec.subregion_size = 10;
    Rng a(123), b(123);
    const auto ra = destroy(img, spec, a);
    const auto rb = destroy(img, spec, b);
    CHECK(ra.first.pix == rb.first.pix);
    REQUIRE(ra.second.entries.size() == rb.second.entries.size());
    for (std::size_t i = 0; i < ra.second.entries.size(); ++i) {
        CHECK(ra.second.entries[i].nonlinear == rb.second.entries[i].nonlinear);
        CHECK(ra.second.entries[i].gamma == rb.second.entries[i].gamma);
    }
}

TEST_CASE("disable flags remove transforms from records") {
    Rng img_rng(31);
    const Image img = test_support::random_image(32, 32, img_rng);
    TransformSpec spec;
    spec.n_subregions = 2;
    spec.subregion_size = 8;
    spec.prob_nonlinear = spec.prob_brightness = spec.prob_noise = 1.0;
    spec.enable_brightness = false;
    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
        const auto [out, rec] = destroy(img, spec, rng);
        for (const auto& e : rec.entries) {
            CHECK(e.nonlinear);
            CHECK_FALSE(e.brightness);
            CHECK(e.noise);
        }
    }
}

TEST_CASE("application rates roughly match probabilities") {
    // Coarse sanity check; the acceptance suite runs the tight version.
    Rng img_rng(32);
    const Image img = test_support::random_image(24, 24, img_rng);
    TransformSpec spec;
    spec.n_subregions = 1;
    spec.subregion_size = 6;
    spec.blur_sigma = 1.0;  // keep the kernel small for speed
    Rng rng(2024);
    int counts[3] = {0, 0, 0};
    const int trials = 1500;
    for (int i = 0; i < trials; ++i) {
        const auto [out, rec] = destroy(img, spec, rng);
        counts[0] += rec.entries[0].nonlinear ? 1 : 0;
        counts[1] += rec.entries[0].brightness ? 1 : 0;
        counts[2] += rec.entries[0].noise ? 1 : 0;
    }
    for (const int c : counts) {
        const double rate = static_cast<double>(c) / trials;
        CHECK(rate == doctest::Approx(0.6).epsilon(0.1));
    }
}

TEST_SUITE_END();

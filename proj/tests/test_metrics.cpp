#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "transfuse/image_io.hpp"
#include "transfuse/metrics.hpp"

using namespace transfuse;
using test_support::TempDir;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("fusion ssim of a perfect copy is one") {
    Rng rng(1);
    const Image img = test_support::random_image(16, 16, rng);
    LossConfig cfg;
    CHECK(metric_ssim_fusion(img, img, img, cfg) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fusion ssim substitution identity and symmetry") {
    Rng rng(2);
    const Image a = test_support::random_image(16, 16, rng);
    const Image b = test_support::random_image(16, 16, rng);
    LossConfig cfg;
    const double expected = 0.5 * (1.0 + ssim(a, b, cfg));
    CHECK(metric_ssim_fusion(a, a, b, cfg) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(metric_ssim_fusion(a, a, b, cfg) ==
          doctest::Approx(metric_ssim_fusion(a, b, a, cfg)).epsilon(1e-15));
}

TEST_CASE("qabf scores a perfect copy as one and a constant as near zero") {
    const Image textured = test_support::synthetic_image(16, 421);
    CHECK(metric_qabf(textured, textured, textured) == doctest::Approx(1.0).epsilon(1e-6));

    const Image flat = Image::constant(16, 16, 0.5);
    const Image textured2 = test_support::synthetic_image(16, 77);
    CHECK(metric_qabf(flat, textured, textured2) < 0.05);
}

TEST_CASE("qabf is bounded and symmetric in the sources") {
    Rng rng(3);
    for (int i = 0; i < 5; ++i) {
        const Image f = test_support::random_image(12, 12, rng);
        const Image a = test_support::random_image(12, 12, rng);
        const Image b = test_support::random_image(12, 12, rng);
        const double q = metric_qabf(f, a, b);
        CHECK(q >= 0.0);
        CHECK(q <= 1.0);
        CHECK(q == doctest::Approx(metric_qabf(f, b, a)).epsilon(1e-12));
    }
}

TEST_CASE("entropy of constant and uniform histograms") {
    CHECK(image_entropy(Image::constant(16, 16, 0.37)) == doctest::Approx(0.0).epsilon(1e-12));

    Image uniform(16, 16);  // exactly one pixel per 8-bit level
    for (int i = 0; i < 256; ++i) uniform.pix[static_cast<std::size_t>(i)] = i / 255.0;
    CHECK(image_entropy(uniform) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("spatial frequency and average gradient vanish on constants") {
    const Image flat = Image::constant(12, 12, 0.6);
    CHECK(spatial_frequency(flat) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(average_gradient(flat) == doctest::Approx(0.0).epsilon(1e-12));

    const Image textured = test_support::synthetic_image(16, 9);
    CHECK(spatial_frequency(textured) > 0.0);
    CHECK(average_gradient(textured) > 0.0);
}

TEST_CASE("evaluate_pair rows are swap invariant") {
    Rng rng(4);
    const Image f = test_support::random_image(16, 16, rng);
    const Image a = test_support::random_image(16, 16, rng);
    const Image b = test_support::random_image(16, 16, rng);
    LossConfig cfg;
    const MetricRow r1 = evaluate_pair("p", f, a, b, cfg);
    const MetricRow r2 = evaluate_pair("p", f, b, a, cfg);
    CHECK(r1.ssim_avg == doctest::Approx(r2.ssim_avg).epsilon(1e-15));
    CHECK(r1.qabf == doctest::Approx(r2.qabf).epsilon(1e-12));
    CHECK(r1.mse_avg == doctest::Approx(r2.mse_avg).epsilon(1e-15));
    CHECK(r1.entropy == r2.entropy);
}

TEST_CASE("evaluate_dir emits sorted rows plus an average") {
    TempDir dir("eval");
    LossConfig cfg;
    for (const std::string id : {"pair2", "pair1"}) {
        const std::uint64_t seed = id == "pair1" ? 10 : 20;
        save_png(dir.path() / (id + "_a.png"), test_support::synthetic_image(16, seed));
        save_png(dir.path() / (id + "_b.png"), test_support::synthetic_image(16, seed + 1));
        save_png(dir.path() / (id + "_fused.png"), test_support::synthetic_image(16, seed + 2));
    }
    const FusionReport report = evaluate_dir(dir.path(), cfg);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].pair_id == "pair1");
    CHECK(report.rows[1].pair_id == "pair2");
    CHECK(report.average.pair_id == "average");
    CHECK(report.average.entropy ==
          doctest::Approx(0.5 * (report.rows[0].entropy + report.rows[1].entropy)).epsilon(1e-12));

    // single pair: average equals the row
    TempDir one("eval_one");
    save_png(one.path() / "x_a.png", test_support::synthetic_image(16, 31));
    save_png(one.path() / "x_b.png", test_support::synthetic_image(16, 32));
    save_png(one.path() / "x_fused.png", test_support::synthetic_image(16, 33));
    const FusionReport single = evaluate_dir(one.path(), cfg);
    REQUIRE(single.rows.size() == 1);
    CHECK(single.average.ssim_avg == single.rows[0].ssim_avg);
    CHECK(single.average.qabf == single.rows[0].qabf);
}

TEST_CASE("evaluate_dir rejects malformed layouts") {
    LossConfig cfg;
    TempDir dir("eval_bad");
    save_png(dir.path() / "x_a.png", test_support::synthetic_image(16, 1));
    save_png(dir.path() / "x_fused.png", test_support::synthetic_image(16, 2));
    CHECK_THROWS_AS(evaluate_dir(dir.path(), cfg), LayoutError);

    TempDir empty("eval_empty");
    CHECK_THROWS_AS(evaluate_dir(empty.path(), cfg), LayoutError);
}

TEST_CASE("report writers emit one line per row plus header and average") {
    TempDir dir("report");
    LossConfig cfg;
    save_png(dir.path() / "p_a.png", test_support::synthetic_image(16, 41));
    save_png(dir.path() / "p_b.png", test_support::synthetic_image(16, 42));
    save_png(dir.path() / "p_fused.png", test_support::synthetic_image(16, 43));
    const FusionReport report = evaluate_dir(dir.path(), cfg);

    const auto csv = dir.path() / "report.csv";
    write_report_csv(report, csv);
    std::ifstream in(csv);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 3);  // header + 1 pair + average

    const auto md = dir.path() / "report.md";
    write_report_markdown(report, md);
    CHECK(std::filesystem::file_size(md) > 0);
}

TEST_SUITE_END();

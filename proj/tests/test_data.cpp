#include <doctest.h>

#include <cmath>
#include <fstream>

#include "test_support.hpp"
#include "transfuse/dataset.hpp"
#include "transfuse/image_io.hpp"

using namespace transfuse;
using test_support::TempDir;

TEST_SUITE_BEGIN("data");

TEST_CASE("pgm extremes normalize to 0 and 1") {
    TempDir dir("pgm");
    Image white = Image::constant(4, 5, 1.0);
    save_pgm(dir.path() / "white.pgm", white);
    const Image loaded_white = load_image(dir.path() / "white.pgm");
    for (const double v : loaded_white.pix) CHECK(v == 1.0);

    Image black = Image::constant(4, 5, 0.0);
    save_pgm(dir.path() / "black.pgm", black);
    const Image loaded_black = load_image(dir.path() / "black.pgm");
    for (const double v : loaded_black.pix) CHECK(v == 0.0);
}

TEST_CASE("pgm round trip is exact after re-quantization") {
    TempDir dir("pgm_rt");
    Rng rng(11);
    const Image img = test_support::random_image(17, 23, rng);
    save_pgm(dir.path() / "a.pgm", img);
    const Image back = load_image(dir.path() / "a.pgm");
    REQUIRE(back.height == img.height);
    REQUIRE(back.width == img.width);
    for (int i = 0; i < img.numel(); ++i) {
        const double q = std::lround(img.pix[i] * 255.0) / 255.0;
        CHECK(back.pix[i] == doctest::Approx(q).epsilon(1e-12));
    }
    // A second trip through the quantized image is bit-exact.
    save_pgm(dir.path() / "b.pgm", back);
    const Image again = load_image(dir.path() / "b.pgm");
    CHECK(again.pix == back.pix);
}

TEST_CASE("png color conversion uses BT.601 luma") {
    TempDir dir("png");
    const auto path = dir.path() / "rg.png";
    test_support::write_bytes(path, test_support::kRedGreenPng,
                              sizeof(test_support::kRedGreenPng));
    const Image img = load_image(path);
    REQUIRE(img.width == 2);
    REQUIRE(img.height == 1);
    CHECK(img.at(0, 0) == doctest::Approx(0.299).epsilon(1e-9));
    CHECK(img.at(0, 1) == doctest::Approx(0.587).epsilon(1e-9));
}

TEST_CASE("png round trip matches quantized grayscale") {
    TempDir dir("png_rt");
    Rng rng(5);
    const Image img = test_support::random_image(9, 13, rng);
    save_png(dir.path() / "x.png", img);
    const Image back = load_image(dir.path() / "x.png");
    for (int i = 0; i < img.numel(); ++i) {
        const double q = std::lround(img.pix[i] * 255.0) / 255.0;
        CHECK(back.pix[i] == doctest::Approx(q).epsilon(1e-12));
    }
}

TEST_CASE("load errors") {
    CHECK_THROWS_AS(load_image("/definitely/not/here.png"), NotFoundError);
    TempDir dir("bad");
    std::ofstream(dir.path() / "junk.png") << "this is not a png";
    CHECK_THROWS_AS(load_image(dir.path() / "junk.png"), DecodeError);
}

TEST_CASE("preprocess keeps constants and is idempotent at matching size") {
    const Image c = Image::constant(10, 10, 0.5);
    const Image r = preprocess(c, 32);
    REQUIRE(r.height == 32);
    for (const double v : r.pix) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));

    Rng rng(3);
    const Image img = test_support::random_image(16, 16, rng);
    const Image same = preprocess(img, 16);
    CHECK(same.pix == img.pix);  // exact identity

    CHECK_THROWS_AS(preprocess(img, 4), ConfigError);
}

TEST_CASE("bilinear resize preserves corners and range") {
    Image board(2, 2);
    board.at(0, 0) = 0.0;
    board.at(0, 1) = 1.0;
    board.at(1, 0) = 1.0;
    board.at(1, 1) = 0.0;
    const Image up = bilinear_resize(board, 4, 4);
    CHECK(up.at(0, 0) == doctest::Approx(0.0));
    CHECK(up.at(0, 3) == doctest::Approx(1.0));
    CHECK(up.at(3, 0) == doctest::Approx(1.0));
    CHECK(up.at(3, 3) == doctest::Approx(0.0));
    for (const double v : up.pix) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // Hand-evaluated corner-aligned weights: sample grid is k/3 of the way
    // across a 1-pixel span, so position (0,1) mixes 2/3 of one corner.
    CHECK(up.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(up.at(0, 2) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("scan_dataset sorts, skips corrupt files, rejects empty dirs") {
    TempDir dir("scan");
    save_png(dir.path() / "b.png", Image::constant(4, 4, 0.25));
    save_png(dir.path() / "a.png", Image::constant(4, 4, 0.75));
    std::ofstream(dir.path() / "c.png") << "corrupt";
    std::ofstream(dir.path() / "notes.txt") << "ignored";

    const DatasetManifest m = scan_dataset(dir.path(), 16);
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].path.filename() == "a.png");
    CHECK(m.entries[1].path.filename() == "b.png");
    REQUIRE(m.skipped.size() == 1);
    CHECK(m.skipped[0].filename() == "c.png");

    const DatasetManifest again = scan_dataset(dir.path(), 16);
    CHECK(again.entries.size() == m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i)
        CHECK(again.entries[i].path == m.entries[i].path);

    TempDir empty("empty");
    CHECK_THROWS_AS(scan_dataset(empty.path(), 16), EmptyDatasetError);
    CHECK_THROWS_AS(scan_dataset(dir.path() / "missing", 16), NotFoundError);
}

TEST_CASE("single image directory yields one entry") {
    TempDir dir("one");
    save_pgm(dir.path() / "only.pgm", Image::constant(6, 6, 0.4));
    const DatasetManifest m = scan_dataset(dir.path(), 16);
    CHECK(m.entries.size() == 1);
    CHECK(m.entries[0].width == 6);
    CHECK(m.entries[0].height == 6);
}

TEST_SUITE_END();

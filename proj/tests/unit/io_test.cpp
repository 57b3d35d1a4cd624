#include "image.hpp"
#include "text_io.hpp"

#include "common.hpp"
#include "rng.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace dag;
using dag::testing::TempDir;

TEST(FormatDouble, ShortestRoundTrip) {
    CounterRng rng{61};
    for (int i = 0; i < 1000; ++i) {
        const double x = std::ldexp(rng.uniform(-1, 1), static_cast<int>(rng.index(80)) - 40);
        EXPECT_EQ(parse_double(format_double(x)), x);
    }
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(2.0), "2");
}

TEST(ParseNumbers, TrimAndReject) {
    EXPECT_EQ(parse_double(" 1.5\r"), 1.5);
    EXPECT_EQ(parse_int("\t-42 "), -42);
    EXPECT_THROW(parse_double("1.5x"), Error);
    EXPECT_THROW(parse_int("4.0"), Error);
    EXPECT_THROW(parse_int(""), Error);
}

TEST(SplitCsv, KeepsEmptyFields) {
    const auto f = split_csv("a,,b,");
    ASSERT_EQ(f.size(), 4u);
    EXPECT_EQ(f[1], "");
    EXPECT_EQ(f[3], "");
}

TEST(TextFiles, WriteReadAndHash) {
    TempDir d("text");
    write_text(d.path() / "a.txt", "x\r\ny\n");
    EXPECT_EQ(read_lines(d.path() / "a.txt"), (std::vector<std::string>{"x", "y"}));
    EXPECT_EQ(read_text(d.path() / "a.txt"), "x\r\ny\n");
    EXPECT_EQ(file_hash(d.path() / "a.txt"), hex64(fnv1a64("x\r\ny\n")));
    EXPECT_NE(fnv1a64("ab"), fnv1a64("ba"));
    try {
        read_text(d.path() / "missing");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingInput);
    }
}

TEST(Pnm, EightBitRoundTripMatchesQuantize) {
    TempDir d("pnm");
    CounterRng rng{62};
    for (int channels : {1, 3}) {
        ImageBuffer img(5, 3, channels);
        for (double& p : img.data()) p = rng.uniform(-1, 1);
        const auto path = d.path() / (channels == 1 ? "g.pgm" : "c.ppm");
        save_pnm(path, img);
        const ImageBuffer back = load_pnm(path);
        EXPECT_EQ(back, quantize_8bit(img));
        EXPECT_EQ(quantize_8bit(back), back);
        for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LE(std::abs(back.data()[i] - img.data()[i]), 1.0 / 127.5);
    }
}

TEST(Image, ValidateRangeAndBilinear) {
    ImageBuffer img(2, 1, 1);
    img.at(0, 0) = -1.0;
    img.at(1, 0) = 1.0;
    EXPECT_NO_THROW(img.validate_range());
    EXPECT_EQ(sample_bilinear(img, 0.5, 0.5), -1.0);
    EXPECT_EQ(sample_bilinear(img, 1.0, 0.5), 0.0);
    EXPECT_EQ(sample_bilinear(img, 1.5 + 1e-12, 0.5), 1.0);  // snapped onto the pixel centre
    EXPECT_EQ(sample_bilinear(img, 10.0, -3.0), 1.0);         // edge clamp
    img.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(img.validate_range(), Error);
}

TEST(ContactSheet, TilesWithWhiteGaps) {
    const ImageBuffer a(2, 2, 1, -1.0), b(2, 2, 1, 0.0);
    const std::vector<ImageBuffer> tiles{a, b, a};
    const ImageBuffer s = contact_sheet(tiles, 2, 1);
    EXPECT_EQ(s.width(), 5);
    EXPECT_EQ(s.height(), 5);
    EXPECT_EQ(s.at(0, 0), -1.0);
    EXPECT_EQ(s.at(2, 0), 1.0);  // gap column
    EXPECT_EQ(s.at(3, 1), 0.0);
    EXPECT_EQ(s.at(0, 3), -1.0);
    EXPECT_EQ(s.at(4, 4), 1.0);  // missing tile renders white
}

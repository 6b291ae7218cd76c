#include <gtest/gtest.h>

#include <filesystem>

#include "grevnet/png.hpp"

using namespace grevnet;

namespace {

std::vector<unsigned char> slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t o) {
    return (std::uint32_t(b[o]) << 24) | (std::uint32_t(b[o + 1]) << 16) | (std::uint32_t(b[o + 2]) << 8) | b[o + 3];
}

} // namespace

TEST(Grid, LayoutAndNormalisation) {
    Tensor<float> x({3, 1, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 8, 8, 8});
    auto g = make_grid(x, 2);
    EXPECT_EQ(g.width, 5u);
    EXPECT_EQ(g.height, 5u);
    EXPECT_EQ(g.low, 0.0);
    EXPECT_EQ(g.high, 8.0);
    EXPECT_EQ(g.pixels[0], 0);
    EXPECT_EQ(g.pixels[1], 32);         // 1/8 of 255
    EXPECT_EQ(g.pixels[2], 0);          // gap column
    EXPECT_EQ(g.pixels[3], 128);        // image 1 top-left = 4
    EXPECT_EQ(g.pixels[3 * 5 + 0], 255);  // image 2 on the second row
    EXPECT_EQ(g.pixels[3 * 5 + 3], 0);  // empty cell
}

TEST(Grid, RejectsBadInput) {
    EXPECT_THROW(make_grid(Tensor<float>({2, 2, 2, 2}), 2), ShapeError);
    EXPECT_THROW(make_grid(Tensor<float>({2, 1, 2}), 2), ShapeError);
    EXPECT_THROW(make_grid(Tensor<float>({1, 1, 2, 2}), 0), ValueError);
    Tensor<float> nan({1, 1, 1, 1}, {std::nanf("")});
    EXPECT_THROW(make_grid(nan, 1), NumericError);
}

TEST(Png, DeterministicBytesAndSidecar) {
    Tensor<double> x({4, 1, 3, 5});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(double(i)) * 2;
    const auto dir = std::filesystem::temp_directory_path();
    const auto a = (dir / "grevnet_png_a.png").string(), b = (dir / "grevnet_png_b.png").string();
    save_grid(a, x, 3);
    save_grid(b, x, 3);
    const auto ba = slurp(a);
    EXPECT_EQ(ba, slurp(b));
    ASSERT_GT(ba.size(), 33u);
    const unsigned char sig[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    EXPECT_TRUE(std::equal(sig, sig + 8, ba.begin()));
    EXPECT_EQ(be32(ba, 16), 3u * 6 - 1);
    EXPECT_EQ(be32(ba, 20), 2u * 4 - 1);
    std::ifstream side(a + ".txt");
    std::string k1, k2;
    double lo, hi;
    side >> k1 >> lo >> k2 >> hi;
    EXPECT_EQ(k1, "min");
    EXPECT_EQ(k2, "max");
    double elo = 1e9, ehi = -1e9;
    for (auto v : x) {
        elo = std::min(elo, v);
        ehi = std::max(ehi, v);
    }
    EXPECT_EQ(lo, elo);
    EXPECT_EQ(hi, ehi);
    for (const auto& p : {a, b}) {
        std::filesystem::remove(p);
        std::filesystem::remove(p + ".txt");
    }
    EXPECT_THROW(save_grid("/nonexistent/dir/x.png", x, 2), DataError);
}

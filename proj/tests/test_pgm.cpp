#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "condseg/pgm.hpp"

using namespace condseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "condseg_test_pgm";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Pgm, EncodeLayout) {
    pgm::GrayImage g(3, 2);
    for (int i = 0; i < 6; ++i) g.pixels()[i] = static_cast<std::uint8_t>(i * 40);
    const auto bytes = pgm::encode(g);
    const std::string header = "P5\n3 2\n255\n";
    ASSERT_EQ(bytes.size(), header.size() + 6);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + header.size()), header);
    EXPECT_EQ(bytes.back(), 200);
}

TEST(Pgm, RoundTripBitExact) {
    pgm::GrayImage g(17, 5);
    for (std::size_t i = 0; i < g.size(); ++i) g.pixels()[i] = static_cast<std::uint8_t>(i * 7);
    const auto bytes = pgm::encode(g);
    EXPECT_EQ(pgm::decode(bytes), g);
    EXPECT_EQ(pgm::encode(pgm::decode(bytes)), bytes);
}

TEST(Pgm, DecodeSkipsComments) {
    const std::string s = "P5 # made by hand\n2 # w\n1\n255\n\x05\xfa";
    const auto g = pgm::decode(std::vector<std::uint8_t>(s.begin(), s.end()));
    ASSERT_EQ(g.width(), 2);
    EXPECT_EQ(g.at(0, 0), 5);
    EXPECT_EQ(g.at(1, 0), 250);
}

TEST(Pgm, RejectsBadInput) {
    auto raw = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
    EXPECT_THROW(pgm::decode(raw("P2\n1 1\n255\n0")), Error);
    EXPECT_THROW(pgm::decode(raw("P5\n2 2\n255\nab")), Error);
    EXPECT_THROW(pgm::decode(raw("P5\n1 1\n65535\nab")), Error);
}

TEST(Pgm, Quantize) {
    EXPECT_EQ(pgm::quantize(0.0), 0);
    EXPECT_EQ(pgm::quantize(1.0), 255);
    EXPECT_EQ(pgm::quantize(0.5), 128);
    EXPECT_EQ(pgm::quantize(-3.0), 0);
    EXPECT_EQ(pgm::quantize(7.0), 255);
}

TEST(Pgm, BinaryFileRoundTrip) {
    BinaryMask m(9, 4);
    m.at(3, 1) = 1;
    m.at(8, 3) = 1;
    const fs::path p = temp_path("mask.pgm");
    pgm::write_binary(p, m);
    EXPECT_EQ(pgm::read(p).at(3, 1), 255);
    EXPECT_EQ(pgm::read_binary(p), m);
}

TEST(Pgm, MissingFileNamesPath) {
    const fs::path p = temp_path("does_not_exist.pgm");
    try {
        pgm::read(p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Io);
        EXPECT_NE(std::string(e.what()).find("does_not_exist.pgm"), std::string::npos);
    }
}

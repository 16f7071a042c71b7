#include <doctest.h>

#include <filesystem>
#include <random>
#include <vector>

#include "nsm/core/error.hpp"
#include "nsm/core/io.hpp"
#include "nsm/core/parallel.hpp"
#include "nsm/core/rng.hpp"

using namespace nsm;

TEST_CASE("philox known-answer vectors") {
  using B = Philox::Block;
  using K = Philox::Key;
  CHECK(Philox::encrypt(B{0, 0, 0, 0}, K{0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox::encrypt(B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}) ==
        B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox::encrypt(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}) ==
        B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a = make_rng(7, 1, 2), b = make_rng(7, 1, 2), c = make_rng(7, 1, 3);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a(), y = b(), z = c();
    CHECK(x == y);
    differs |= (x != z);
  }
  CHECK(differs);
  Rng r = make_rng(1, 0);
  double s = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = uniform01(r);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    s += u;
  }
  CHECK(s / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("pairwise sum is exact on integers and order-fixed") {
  std::vector<double> v(1001);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  CHECK(pairwise_sum(v) == 500500.0);
  CHECK(pairwise_sum(std::span<const double>()) == 0.0);
}

TEST_CASE("csv and json round-trip bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "nsm_core_io";
  std::filesystem::create_directories(dir);
  Rng rng = make_rng(3, 0);
  std::normal_distribution<double> n01;
  Mat m(5, 3);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng) * 1e-7 + (i == 4 ? 1e300 : 0);
  io::write_csv(dir / "t.csv", {"a", "b", "c"}, m);
  const auto t = io::read_csv(dir / "t.csv");
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  CHECK(t.values == m);
  io::write_json(dir / "t.json", io::to_json(m));
  CHECK(io::mat_from_json(io::read_json(dir / "t.json")) == m);
  CHECK_THROWS_AS(io::read_json(dir / "missing.json"), ManifestError);
  CHECK(io::parse_double(io::format_double(0.1)) == 0.1);
}

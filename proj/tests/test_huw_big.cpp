// Full-scale proposal-table build: s_max = 5500 at driving value 4.90, the
// largest configuration the experiments need.  Verifies spot entries against
// direct summation and that file persistence round-trips bit-exactly.  Kept
// out of the main unit binary because the build takes on the order of a
// minute and ~240 MB of memory.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <string>

#include "coalsis/huw.hpp"
#include "doctest.h"

using namespace coalsis;

TEST_CASE("huw table at s_max=5500 builds, spot-checks, and persists") {
  const int64_t s_max = 5500;
  const double theta = 4.90;
  const HuwTable table(s_max, theta);

  const struct {
    int64_t s, d;
  } probes[] = {{5500, 1},    {5500, 2},    {5500, 2750}, {5500, 5499},
                {4321, 17},   {1234, 600},  {55, 18},     {550, 34},
                {2, 1},       {3, 2}};
  for (const auto& p : probes) {
    const HuwSums direct = huw_direct_sums(p.s, p.d, theta);
    const double a = table.numerator_sum(p.s, p.d);
    const double b = table.denominator_sum(p.s, p.d);
    if (direct.numerator == 0.0) {
      CHECK(a == 0.0);
    } else {
      CHECK(std::abs(a - direct.numerator) / direct.numerator <= 1e-10);
    }
    CHECK(std::abs(b - direct.denominator) / direct.denominator <= 1e-10);
    const double r = table.ratio(p.s, p.d);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0 + 1e-14);
  }

  const std::string path = "huw_big_table_roundtrip.bin";
  {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    table.save(out);
  }
  {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    const HuwTable loaded = HuwTable::load(in, path);
    CHECK(loaded.s_max() == s_max);
    CHECK(loaded.theta() == theta);
    CHECK(table.bit_identical(loaded));
  }
  std::remove(path.c_str());
}

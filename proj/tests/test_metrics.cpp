#include <catch2/catch_amalgamated.hpp>

#include "dkrr/metrics.hpp"

using dkrr::Rng;
using dkrr::Vector;

TEST_CASE("mse hand values") {
  Vector a(2), b(2);
  a << 1, 3;
  b << 0, 0;
  CHECK(dkrr::mse(a, b) == 5.0);
  CHECK(dkrr::mse(a, a) == 0.0);
  Vector s(1), t(1);
  s << 2;
  t << 0;
  CHECK(dkrr::mse(s, t) == 4.0);
  CHECK(dkrr::mse(b, a) == dkrr::mse(a, b));
  Vector wrong(3);
  CHECK_THROWS_AS(dkrr::mse(a, wrong), dkrr::InvalidInput);
}

TEST_CASE("relative error") {
  CHECK(dkrr::relative_error(2.0, 2.0) == 0.0);
  CHECK(dkrr::relative_error(1.05 * 2.0, 2.0) == Catch::Approx(0.05).margin(1e-15));
  CHECK(dkrr::relative_error(0.9 * 2.0, 2.0) == Catch::Approx(0.1).margin(1e-15));
  CHECK_THROWS_AS(dkrr::relative_error(1.0, 0.0), dkrr::InvalidInput);
}

TEST_CASE("relative error scale invariance") {
  Rng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    const double gmse = 0.1 + rng.uniform();
    const double dist = 0.1 + rng.uniform();
    const double c = 0.5 + 2.0 * rng.uniform();
    REQUIRE(dkrr::relative_error(c * dist, c * gmse) ==
            Catch::Approx(dkrr::relative_error(dist, gmse)).epsilon(1e-12));
  }
}

TEST_CASE("max machines scan") {
  std::map<long long, double> grid{{2, 0.01}, {4, 0.03}, {6, 0.2}};
  CHECK(dkrr::max_machines(grid, 0.05) == 4);
  std::map<long long, double> all_ok{{2, 0.01}, {4, 0.02}, {8, 0.001}};
  CHECK(dkrr::max_machines(all_ok, 0.05) == 8);
  std::map<long long, double> none{{2, 0.5}, {4, 0.9}};
  CHECK_FALSE(dkrr::max_machines(none, 0.05).has_value());
  CHECK_THROWS_AS(dkrr::max_machines({}, 0.05), dkrr::InvalidInput);
}

TEST_CASE("effective dimension hand values") {
  Vector two = Vector::Constant(2, 1.0);
  CHECK(dkrr::effective_dimension(two, 1.0) == 1.0);
  CHECK(dkrr::effective_dimension(two, 1e12) < 1e-11);
  Vector spectrum(4);
  spectrum << 1.0, 0.5, 0.0, -5e-11;  // round-off negative clips to zero
  CHECK(dkrr::effective_dimension(spectrum, 1e-12) ==
        Catch::Approx(2.0).epsilon(1e-6));
  Vector bad(2);
  bad << 1.0, -1e-6;
  CHECK_THROWS_AS(dkrr::effective_dimension(bad, 0.1), dkrr::InvalidInput);
  CHECK_THROWS_AS(dkrr::effective_dimension(two, 0.0), dkrr::InvalidInput);
}

TEST_CASE("effective dimension strictly decreasing in lambda") {
  Rng rng(9);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 2 + static_cast<int>(rng.next_word() % 30);
    Vector spectrum(n);
    for (int i = 0; i < n; ++i) spectrum(i) = rng.uniform();
    spectrum(0) = 0.5 + rng.uniform();  // at least one positive eigenvalue
    const double l1 = 0.01 + rng.uniform();
    const double l2 = l1 * (1.5 + rng.uniform());
    REQUIRE(dkrr::effective_dimension(spectrum, l2) <
            dkrr::effective_dimension(spectrum, l1));
  }
}

TEST_CASE("diagnostic quantities hand values") {
  // n = 100, lambda = 0.01, N = 4: A = (1/10)(1/1 + 2) = 0.3
  const auto [a1, b1] = dkrr::diag_quantities(100, 0.01, 4.0);
  CHECK(a1 == Catch::Approx(0.3).margin(1e-15));

  // n lambda = 1, N = e: B = (1+1)/1 + sqrt(2)
  const auto [a2, b2] = dkrr::diag_quantities(1, 1.0, std::exp(1.0));
  CHECK(b2 == Catch::Approx(2.0 + std::sqrt(2.0)).margin(1e-12));

  // N = 1, n lambda = 1: B = 1 + 1 = 2
  const auto [a3, b3] = dkrr::diag_quantities(1, 1.0, 1.0);
  CHECK(b3 == Catch::Approx(2.0).margin(1e-15));

  CHECK_THROWS_AS(dkrr::diag_quantities(10, 0.1, 0.5), dkrr::InvalidInput);
}

TEST_CASE("diagnostics strictly decreasing in n") {
  Rng rng(17);
  for (int rep = 0; rep < 100; ++rep) {
    const long long n = 2 + static_cast<long long>(rng.next_word() % 10000);
    const double lambda = 0.001 + rng.uniform();
    const double eff = 1.0 + 10.0 * rng.uniform();
    const auto [a_small, b_small] = dkrr::diag_quantities(n, lambda, eff);
    const auto [a_big, b_big] = dkrr::diag_quantities(2 * n, lambda, eff);
    REQUIRE(a_big < a_small);
    REQUIRE(b_big < b_small);
  }
}

TEST_CASE("contraction estimate") {
  CHECK(dkrr::contraction_estimate({1.0, 0.5, 0.25}) ==
        std::vector<double>{0.5, 0.5});
  CHECK(dkrr::contraction_estimate({2.0, 2.0, 2.0}) ==
        std::vector<double>{1.0, 1.0});
  // floor: ratios after the distance collapses are excluded
  const auto r = dkrr::contraction_estimate({1.0, 1e-14, 37.0});
  REQUIRE(r.size() == 1);
  CHECK(r[0] == 1e-14);
}

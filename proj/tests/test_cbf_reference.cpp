#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "hl0/cbf_reference.hpp"

using namespace hl0;

namespace {

double line_cdf(double d, double t) { return std::erfc(d / (2.0 * std::sqrt(t))); }

// Survival of a variance-2 Brownian motion on (0, L) started at d, by the
// sine series of the heat kernel.
double circle_cdf_series(double d, double t) {
  constexpr double L = 2.0 * kPi;
  double survival = 0.0;
  for (int k = 1; k < 20001; k += 2) {
    const double w = k * kPi / L;
    survival += 4.0 / (k * kPi) * std::sin(w * d) * std::exp(-w * w * t);
  }
  return 1.0 - survival;
}

// Labels of the blocks of the partition given by equal positions (mod 2pi on
// the circle), `back` rows before the last so late starts line up.
std::vector<std::size_t> blocks(const std::vector<FlowTrajectory>& tr, std::size_t back, bool circle) {
  std::vector<std::size_t> label(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) {
    label[i] = i;
    for (std::size_t j = 0; j < i; ++j) {
      const double diff = tr[i].angles[tr[i].angles.size() - 1 - back] - tr[j].angles[tr[j].angles.size() - 1 - back];
      const double gap = circle ? std::abs(reduce_angle(diff).angle) : std::abs(diff);
      if (gap <= 1e-12) {
        label[i] = label[j];
        break;
      }
    }
  }
  return label;
}

}  // namespace

TEST_CASE("simulate_cbf: equal starts share one path") {
  CbfConfig config;
  config.starts = {{0.0, 0.5}, {0.0, 0.5}};
  config.horizon = 1.0;
  config.dt = 1e-2;
  config.seed = 3;
  const auto tr = simulate_cbf(config);
  REQUIRE(tr.size() == 2);
  CHECK(tr[0].angles == tr[1].angles);
  REQUIRE(tr[0].coalesced_step);
  CHECK(*tr[0].coalesced_step == 0);
  CHECK(*tr[1].coalesced_step == 0);
  CHECK(tr[0].times.front() == 0.0);
}

TEST_CASE("simulate_cbf: one path has variance t") {
  CbfConfig config;
  config.starts = {{0.0, 1.5}};
  config.horizon = 1.0;
  config.dt = 0.1;
  double sum = 0.0;
  double sum2 = 0.0;
  double sum4 = 0.0;
  const int runs = 100000;
  for (int run = 0; run < runs; ++run) {
    config.seed = derive_seed(17, run);
    const auto tr = simulate_cbf(config);
    const double x = tr[0].angles.back() - 1.5;
    sum += x;
    sum2 += x * x;
    sum4 += x * x * x * x;
  }
  const double var = sum2 / runs;
  const double se = std::sqrt((sum4 / runs - var * var) / runs);
  CHECK(std::abs(var - 1.0) <= 3.0 * se);
  CHECK(std::abs(sum / runs) <= 3.0 * std::sqrt(1.0 / runs));
}

TEST_CASE("pair_collision_cdf: edge cases and the line value") {
  for (CbfDomain d : {CbfDomain::Line, CbfDomain::Circle}) {
    CHECK(pair_collision_cdf(d, 0.0, 0.3) == 1.0);
    CHECK(pair_collision_cdf(d, 0.0, 0.0) == 1.0);
    CHECK(pair_collision_cdf(d, 1.0, 0.0) == 0.0);
    CHECK_THROWS_AS(pair_collision_cdf(d, -1.0, 1.0), DomainError);
    CHECK_THROWS_AS(pair_collision_cdf(d, 1.0, -1.0), DomainError);
  }
  CHECK(pair_collision_cdf(CbfDomain::Line, 2.0, 1.0) == doctest::Approx(0.157299).epsilon(2e-6));
  CHECK(std::abs(pair_collision_cdf(CbfDomain::Line, 2.0, 1.0) - std::erfc(1.0)) <= 1e-15);
  CHECK(pair_collision_cdf(CbfDomain::Line, 1e3, 1.0) == 0.0);
  CHECK_THROWS_AS(pair_collision_cdf(CbfDomain::Circle, 7.0, 1.0), DomainError);
  CHECK(pair_collision_cdf(CbfDomain::Circle, kTwoPi, 1.0) == 1.0);
}

TEST_CASE("pair_collision_cdf: circle agrees with the sine series") {
  for (double d : {0.1, 1.0, kPi, 5.0, 6.2}) {
    for (double t : {0.05, 0.5, 2.0, 10.0, 50.0}) {
      INFO("d = ", d, ", t = ", t);
      CHECK(std::abs(pair_collision_cdf(CbfDomain::Circle, d, t) - circle_cdf_series(d, t)) <= 1e-9);
    }
  }
}

TEST_CASE("pair_collision_cdf: circle and line agree for short times") {
  for (double d : {0.01, 0.1, 0.3, 0.5}) {
    const double tmax = (kTwoPi - d) * (kTwoPi - d) / 32.0;
    for (int i = 1; i <= 20; ++i) {
      const double t = tmax * i / 20.0;
      CHECK(std::abs(pair_collision_cdf(CbfDomain::Circle, d, t) - pair_collision_cdf(CbfDomain::Line, d, t)) <= 1e-4);
    }
  }
}

TEST_CASE("simulate_cbf: line pair at distance 2 meets with probability 2 Phi(-sqrt 2)") {
  CbfConfig config;
  config.starts = {{0.0, 0.0}, {0.0, 2.0}};
  config.horizon = 1.0;
  config.dt = 1e-3;
  config.record_every = 1000;
  const int runs = 100000;
  int met = 0;
  for (int run = 0; run < runs; ++run) {
    config.seed = derive_seed(23, run);
    met += simulate_cbf(config)[0].coalesced_step ? 1 : 0;
  }
  const double p = 0.15730;
  const double freq = static_cast<double>(met) / runs;
  INFO("empirical ", freq);
  CHECK(std::abs(freq - p) <= 3.0 * std::sqrt(p * (1.0 - p) / runs));
}

TEST_CASE("sample_pair_collision: circle matches its CDF") {
  CounterRng rng(41);
  const int runs = 20000;
  int met = 0;
  for (int run = 0; run < runs; ++run) {
    met += sample_pair_collision(CbfDomain::Circle, kPi, 2.0, 1e-3, true, rng) ? 1 : 0;
  }
  const double p = pair_collision_cdf(CbfDomain::Circle, kPi, 2.0);
  CHECK(std::abs(static_cast<double>(met) / runs - p) <= 3.0 * std::sqrt(p * (1.0 - p) / runs));
  CHECK(sample_pair_collision(CbfDomain::Line, 0.0, 1.0, 0.1, true, rng) == 0.0);
}

TEST_CASE("exchangeable in the start labels") {
  for (CbfDomain domain : {CbfDomain::Line, CbfDomain::Circle}) {
    CbfConfig config;
    config.domain = domain;
    config.starts = {{0.0, 0.1}, {0.0, 1.0}, {0.0, -0.6}, {0.3, 0.45}, {0.0, 2.9}, {0.55, -2.0}};
    config.horizon = 2.0;
    config.dt = 1e-2;
    config.seed = 77;
    const auto base = simulate_cbf(config);
    const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
    CbfConfig shuffled = config;
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled.starts[i] = config.starts[perm[i]];
    const auto other = simulate_cbf(shuffled);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      const FlowTrajectory& a = other[i];
      const FlowTrajectory& b = base[perm[i]];
      CHECK(a.angles == b.angles);
      CHECK(a.times == b.times);
      CHECK(a.steps == b.steps);
      CHECK(a.coalesced_step == b.coalesced_step);
    }
    const auto base_blocks = blocks(base, 0, domain == CbfDomain::Circle);
    const auto other_blocks = blocks(other, 0, domain == CbfDomain::Circle);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      for (std::size_t j = 0; j < perm.size(); ++j) {
        CHECK((other_blocks[i] == other_blocks[j]) == (base_blocks[perm[i]] == base_blocks[perm[j]]));
      }
    }
  }
}

TEST_CASE("coalescence only coarsens the partition") {
  for (CbfDomain domain : {CbfDomain::Line, CbfDomain::Circle}) {
    CbfConfig config;
    config.domain = domain;
    for (int i = 0; i < 12; ++i) config.starts.push_back({0.0, kTwoPi * i / 12.0});
    config.horizon = 3.0;
    config.dt = 1e-3;
    config.record_every = 10;
    config.seed = 5;
    const auto tr = simulate_cbf(config);
    const bool circle = domain == CbfDomain::Circle;
    const std::size_t rows = tr[0].angles.size();
    std::vector<std::size_t> prev = blocks(tr, rows - 1, circle);
    std::size_t merges = 0;
    for (std::size_t r = 1; r < rows; ++r) {
      const std::vector<std::size_t> now = blocks(tr, rows - 1 - r, circle);
      for (std::size_t i = 0; i < tr.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
          if (prev[i] == prev[j]) REQUIRE(now[i] == now[j]);
          merges += (prev[i] != prev[j] && now[i] == now[j]) ? 1 : 0;
        }
      }
      prev = now;
    }
    CHECK(merges > 0);
    for (std::size_t i = 0; i < tr.size(); ++i) {
      for (std::size_t r = 1; r < tr[i].times.size(); ++r) CHECK(tr[i].times[r] > tr[i].times[r - 1]);
    }
  }
}

TEST_CASE("bridge correction removes the discretisation bias") {
  const double dt = 1e-2;
  const int runs = 20000;
  double worst_bridge = 0.0;
  double worst_plain = 0.0;
  for (double d : {0.3, 1.0, 2.0}) {
    for (bool bridge : {true, false}) {
      CounterRng rng(derive_seed(8, static_cast<std::uint64_t>(d * 10) + (bridge ? 100 : 0)));
      std::vector<double> times;
      for (int run = 0; run < runs; ++run) {
        const auto t = sample_pair_collision(CbfDomain::Line, d, 1.0, dt, bridge, rng);
        if (t) times.push_back(*t);
      }
      std::sort(times.begin(), times.end());
      for (double t : {0.1, 0.25, 0.5, 0.75, 1.0}) {
        const double freq =
            static_cast<double>(std::upper_bound(times.begin(), times.end(), t + 1e-12) - times.begin()) / runs;
        const double err = std::abs(freq - line_cdf(d, t));
        (bridge ? worst_bridge : worst_plain) = std::max(bridge ? worst_bridge : worst_plain, err);
      }
    }
  }
  INFO("bridge error ", worst_bridge, ", plain error ", worst_plain);
  CHECK(worst_bridge <= 0.02);
  CHECK(worst_plain > worst_bridge);
}

TEST_CASE("simulate_cbf: late starts and validation") {
  CbfConfig config;
  config.starts = {{0.0, 0.0}, {0.25, 3.0}};
  config.horizon = 1.0;
  config.dt = 0.1;
  config.seed = 1;
  const auto tr = simulate_cbf(config);
  CHECK(tr[0].steps.front() == 0);
  CHECK(tr[1].steps.front() == 3);
  CHECK(tr[1].angles.front() == 3.0);
  CHECK(tr[0].steps.back() == 10);
  CHECK(tr[1].steps.back() == 10);

  config.dt = 0.0;
  CHECK_THROWS_AS(simulate_cbf(config), DomainError);
  config.dt = 0.1;
  config.starts = {};
  CHECK_THROWS_AS(simulate_cbf(config), DomainError);
  config.starts = {{2.0, 0.0}};
  CHECK_THROWS_AS(simulate_cbf(config), DomainError);
  CHECK(cbf_domain_from_string("circle") == CbfDomain::Circle);
  CHECK_THROWS_AS(cbf_domain_from_string("torus"), DomainError);
}

TEST_CASE("bridge_hit_probability") {
  CHECK(bridge_hit_probability(0.0, 1.0, 0.01) == 1.0);
  CHECK(bridge_hit_probability(0.1, 0.2, 0.01) == doctest::Approx(std::exp(-2.0)));
  CHECK(bridge_hit_probability(-0.1, -0.2, 0.01) == doctest::Approx(std::exp(-2.0)));
}

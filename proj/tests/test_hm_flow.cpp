#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hl0/cluster_engine.hpp"
#include "hl0/hm_flow.hpp"
#include "hl0/rng.hpp"

using namespace hl0;

namespace {

// theta + h(x - theta) as a MonotonePair.
MonotonePair rotated_pair(const ParticleSpec& spec, MapDirection dir, double theta) {
  const CircleMaps maps(spec);
  std::vector<double> jumps;
  for (double b : maps.breakpoints(dir)) jumps.push_back(reduce_angle(b + theta).angle);
  return MonotonePair([maps, dir, theta](double x) { return maps.rotated(dir, Version::Plus, theta, x); },
                      [maps, dir, theta](double x) { return maps.rotated(dir, Version::Minus, theta, x); }, true,
                      jumps);
}

// The completed graph of a monotone map, turned by 45 degrees, is the graph
// of v = V(u) with u = x + y, v = y - x.
double rotated_graph(const MonotonePair& f, double u) {
  double lo = u / 2.0 - 8.0;
  double hi = u / 2.0 + 8.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid + f.plus(mid) < u) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double x = 0.5 * (lo + hi);
  return u - 2.0 * x;
}

constexpr int kGraphGrid = 200000;
constexpr double kGraphSpacing = 4.0 * kPi / kGraphGrid;

double graph_distance(const MonotonePair& f, const MonotonePair& g) {
  std::vector<double> us;
  const int grid = kGraphGrid;
  for (int i = 0; i < grid; ++i) us.push_back(-2.0 * kPi + 4.0 * kPi * i / grid);
  for (const MonotonePair* h : {&f, &g}) {
    for (double b : h->breakpoints()) {
      us.push_back(b + h->minus(b));
      us.push_back(b + h->plus(b));
    }
  }
  double worst = 0.0;
  for (double u : us) worst = std::max(worst, std::abs(rotated_graph(f, u) - rotated_graph(g, u)));
  return worst / 2.0;
}

struct Moments {
  double sum = 0.0;
  double sum2 = 0.0;
  std::size_t count = 0;
  void add(double v) {
    sum += v;
    sum2 += v * v;
    ++count;
  }
  double mean() const { return sum / count; }
  double stderr_() const { return std::sqrt((sum2 / count - mean() * mean()) / count); }
};

}  // namespace

TEST_CASE("flow_map: empty composition") {
  const ClusterState c = grow(build_particle(Family::Slit, 0.1), 50, 3);
  for (double x : {0.0, 1.234, -7.5, 40.0}) {
    for (FlowDirection d : {FlowDirection::Forward, FlowDirection::Backward}) {
      CHECK(flow_map(c, FlowQuery{17, 17, d, Version::Plus}, x) == x);
      CHECK(flow_map(c, FlowQuery{0, 0, d, Version::Minus}, x) == x);
    }
  }
  CHECK_THROWS_AS(flow_map(c, FlowQuery{5, 4, FlowDirection::Forward, Version::Plus}, 0.0), DomainError);
  CHECK_THROWS_AS(flow_map(c, FlowQuery{0, 51, FlowDirection::Forward, Version::Plus}, 0.0), DomainError);
}

TEST_CASE("flow_map: flow property is exact") {
  const ClusterState c = grow(build_particle(Family::Arc, 0.1), 400, 8);
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<std::size_t> level(0, 400);
  std::uniform_real_distribution<double> angle(-10.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    std::size_t a[3] = {level(gen), level(gen), level(gen)};
    std::sort(a, a + 3);
    const double x = angle(gen);
    for (Version v : {Version::Plus, Version::Minus}) {
      const double whole = flow_map(c, FlowQuery{a[0], a[2], FlowDirection::Forward, v}, x);
      const double split = flow_map(c, FlowQuery{a[1], a[2], FlowDirection::Forward, v},
                                    flow_map(c, FlowQuery{a[0], a[1], FlowDirection::Forward, v}, x));
      CHECK(whole == split);
      const double back = flow_map(c, FlowQuery{a[0], a[2], FlowDirection::Backward, v}, x);
      const double back_split = flow_map(c, FlowQuery{a[0], a[1], FlowDirection::Backward, v},
                                         flow_map(c, FlowQuery{a[1], a[2], FlowDirection::Backward, v}, x));
      CHECK(back == back_split);
    }
  }
}

TEST_CASE("flow_map: backward then forward") {
  for (Family f : {Family::Slit, Family::Arc}) {
    const ParticleSpec s = build_particle(f, 0.1);
    const ClusterState c = grow(s, 300, 13);
    const AngleFlow flow(c);
    std::mt19937_64 gen(2);
    std::uniform_int_distribution<std::size_t> level(0, 300);
    std::uniform_real_distribution<double> angle(-kPi, kPi);
    int clean = 0;
    for (int i = 0; i < 2000; ++i) {
      std::size_t m = level(gen);
      std::size_t n = level(gen);
      if (m > n) std::swap(m, n);
      const double x = angle(gen);
      const double y = flow.apply(FlowQuery{m, n, FlowDirection::Backward, Version::Plus}, x);
      const double upper = flow.apply(FlowQuery{m, n, FlowDirection::Forward, Version::Plus}, y);
      // Along the orbit each step is bracketed by the generalized inverses.
      // Composed, the bracket is not robust: an absorbed point sits exactly on
      // the next jump, where one ulp decides the branch.
      bool avoids = true;
      double z = x;
      for (std::size_t k = n; k > m; --k) {
        const double d = reduce_angle(z - c.theta(k)).angle;
        if (std::abs(d) <= s.q + 1e-6) avoids = false;
        const double w = flow.step(MapDirection::F, Version::Plus, k, z);
        CHECK(flow.step(MapDirection::G, Version::Minus, k, w) <= z + 1e-12);
        CHECK(z <= flow.step(MapDirection::G, Version::Plus, k, w) + 1e-12);
        z = w;
      }
      CHECK(z == y);
      if (avoids) {
        ++clean;
        CHECK(std::abs(upper - x) <= 1e-9);
      }
    }
    CHECK(clean > 10);
  }
}

TEST_CASE("flow_map: one forward step has mean 0 and mean square 1/rho") {
  for (Family f : {Family::Slit, Family::Arc}) {
    const ParticleSpec s = build_particle(f, 0.1);
    const CircleMaps maps(s);
    CounterRng rng(99);
    Moments first;
    Moments second;
    for (int i = 0; i < 100000; ++i) {
      const double theta = kTwoPi * rng.uniform();
      const double x = kTwoPi * rng.uniform();
      const double inc = maps.rotated(MapDirection::G, Version::Plus, theta, x) - x;
      first.add(inc);
      second.add(inc * inc);
    }
    CHECK(std::abs(first.mean()) <= 3.0 * first.stderr_());
    CHECK(std::abs(second.mean() - 1.0 / s.rho) <= 3.0 * second.stderr_());
  }
}

TEST_CASE("embed_interval examples") {
  const auto a = embed_interval(Interval{0.35, 0.52, false, true}, 100.0);
  REQUIRE(a);
  CHECK(a->first == 36);
  CHECK(a->second == 52);
  CHECK_FALSE(embed_interval(Interval{0.351, 0.359, false, false}, 10.0));
  const auto c = embed_interval(Interval{0.5, 0.5, true, true}, 2.0);
  REQUIRE(c);
  CHECK(c->first == 1);
  CHECK(c->second == 1);
  const auto d = embed_interval(Interval{0.35, 0.52, true, false}, 100.0);
  REQUIRE(d);
  CHECK(d->first == 35);
  CHECK(d->second == 51);
  CHECK_THROWS_AS(embed_interval(Interval{0.0, 1.0}, 0.0), DomainError);
  CHECK_THROWS_AS(embed_interval(Interval{1.0, 0.0}, 1.0), DomainError);
}

TEST_CASE("metric_dD: zero on the diagonal") {
  const ParticleSpec s = build_particle(Family::Slit, 0.2);
  const MonotonePair f = rotated_pair(s, MapDirection::F, 0.7);
  CHECK(metric_dD(f, f) == 0.0);
  CHECK(metric_dD(MonotonePair::identity(), MonotonePair::identity()) == 0.0);
}

TEST_CASE("metric_dD: identity against a translate") {
  for (double a : {0.01, 0.3, 1.0, 2.5}) {
    const MonotonePair g([a](double x) { return x + a; }, true);
    CHECK(std::abs(metric_dD(MonotonePair::identity(), g) - a / 2.0) <= 1e-6);
  }
}

TEST_CASE("metric_dD: symmetric and equal to the rotated-graph distance") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const ParticleSpec s1 = build_particle(i % 2 ? Family::Slit : Family::Arc, 0.05 + 0.28 * unit(gen));
    const ParticleSpec s2 = build_particle(i % 3 ? Family::Slit : Family::Arc, 0.05 + 0.28 * unit(gen));
    const MapDirection d1 = unit(gen) < 0.5 ? MapDirection::F : MapDirection::G;
    const MapDirection d2 = unit(gen) < 0.5 ? MapDirection::F : MapDirection::G;
    const MonotonePair f = rotated_pair(s1, d1, kTwoPi * unit(gen));
    const MonotonePair g = rotated_pair(s2, d2, kTwoPi * unit(gen));
    const double fg = metric_dD(f, g);
    CHECK(std::abs(fg - metric_dD(g, f)) <= 2e-9);
    if (i < 6) {
      // The difference of turned graphs is 2-Lipschitz, so the grid sup is
      // within half a grid spacing of the true value.
      const double oracle = graph_distance(f, g);
      INFO("case ", i, " dD ", fg, " graph ", oracle);
      CHECK(fg >= oracle - 1e-9);
      CHECK(fg <= oracle + 0.5 * kGraphSpacing + 1e-9);
    }
  }
}

TEST_CASE("metric_dDbar on non-periodic maps") {
  const MonotonePair id = MonotonePair::identity(false);
  CHECK(metric_dDbar(id, id) == 0.0);
  const MonotonePair shifted([](double x) { return x + 0.4; }, false);
  CHECK(std::abs(metric_dDbar(id, shifted) - 0.2) <= 1e-6);
  // A large shift saturates every window term at 1.
  const MonotonePair far([](double x) { return x + 10.0; }, false);
  CHECK(std::abs(metric_dDbar(id, far) - (1.0 - std::ldexp(1.0, -32))) <= 1e-6);
  CHECK_THROWS_AS(metric_dD(id, shifted), DomainError);
}

TEST_CASE("track_points: identical starts") {
  const ClusterState c = grow(build_particle(Family::Slit, 0.1), 200, 4);
  const std::vector<FlowStart> starts = {{0, 0.3}, {0, 0.3}};
  const auto tr = track_points(c, starts, FlowDirection::Forward, 200, Scaling::None);
  REQUIRE(tr.size() == 2);
  CHECK(tr[0].angles == tr[1].angles);
  CHECK(tr[0].times == tr[1].times);
  REQUIRE(tr[0].coalesced_step);
  REQUIRE(tr[1].coalesced_step);
  CHECK(*tr[0].coalesced_step == 0);
  CHECK(*tr[1].coalesced_step == 0);
  CHECK(tr[0].coalesced_with.front() == 1);
  CHECK(tr[1].coalesced_with.front() == 0);
}

TEST_CASE("track_points: starts one turn apart coalesce at once") {
  const ClusterState c = grow(build_particle(Family::Arc, 0.1), 200, 4);
  const std::vector<FlowStart> starts = {{0, 1.0}, {0, 1.0 + kTwoPi}};
  const auto tr = track_points(c, starts, FlowDirection::Forward, 200, Scaling::None);
  REQUIRE(tr[0].coalesced_step);
  CHECK(*tr[0].coalesced_step == 0);
  CHECK(*tr[1].coalesced_step == 0);
  for (std::size_t r = 0; r < tr[0].angles.size(); ++r) {
    CHECK(std::abs(tr[1].angles[r] - tr[0].angles[r] - kTwoPi) <= 1e-12);
  }
}

TEST_CASE("track_points: variance after n steps is n/rho") {
  for (Family f : {Family::Slit, Family::Arc}) {
    const ParticleSpec s = build_particle(f, 0.1);
    const std::size_t n = 100;
    const std::size_t runs = 10000;
    Moments sq;
    Moments lag;
    for (std::size_t run = 0; run < runs; ++run) {
      const std::vector<double> thetas = sample_thetas(n, derive_seed(5, run));
      const AngleFlow flow(s, thetas);
      const std::vector<FlowStart> start = {{0, 0.0}};
      const auto tr = track_points(flow, start, FlowDirection::Forward, n, Scaling::None);
      const auto& a = tr[0].angles;
      REQUIRE(a.size() == n + 1);
      const double disp = a[n] - a[0];
      sq.add(disp * disp);
      lag.add((a[51] - a[50]) * (a[50] - a[49]));
    }
    INFO("variance ", sq.mean(), " expected ", n / s.rho);
    CHECK(std::abs(sq.mean() - n / s.rho) <= 3.0 * sq.stderr_());
    // Distinct increments are uncorrelated.
    CHECK(std::abs(lag.mean()) <= 3.0 * lag.stderr_());
  }
}

TEST_CASE("track_points: time axes and scalings") {
  const ParticleSpec s = build_particle(Family::Slit, 0.05);
  const ClusterState c = grow(s, 100, 6);
  const std::vector<FlowStart> starts = {{10, 0.5}, {20, 2.0}};
  const auto raw = track_points(c, starts, FlowDirection::Forward, 100, Scaling::None);
  const auto lng = track_points(c, starts, FlowDirection::Forward, 100, Scaling::Long);
  const auto loc = track_points(c, starts, FlowDirection::Forward, 100, Scaling::Local);
  CHECK(raw[0].steps.front() == 10);
  CHECK(raw[1].steps.front() == 20);
  CHECK(raw[0].steps.back() == 100);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t r = 0; r < raw[i].steps.size(); ++r) {
      const double k = static_cast<double>(raw[i].steps[r]);
      CHECK(raw[i].times[r] == k);
      CHECK(lng[i].times[r] == k / s.rho);
      CHECK(loc[i].times[r] == s.c * k);
      CHECK(lng[i].angles[r] == raw[i].angles[r]);
      CHECK(loc[i].angles[r] == doctest::Approx(raw[i].angles[r] / std::sqrt(s.delta_star)).epsilon(1e-14));
      if (r > 0) CHECK(raw[i].times[r] > raw[i].times[r - 1]);
    }
  }
  const auto back = track_points(c, starts, FlowDirection::Backward, 0, Scaling::None);
  CHECK(back[1].steps.front() == 20);
  CHECK(back[1].times.front() == 0.0);
  CHECK(back[0].times.front() == 10.0);
  CHECK(back[0].steps.back() == 0);
  CHECK(back[0].times.back() == 20.0);
  CHECK_THROWS_AS(track_points(c, std::vector<FlowStart>{}, FlowDirection::Forward, 100, Scaling::None), DomainError);
  CHECK_THROWS_AS(track_points(c, starts, FlowDirection::Forward, 101, Scaling::None), DomainError);
  CHECK_THROWS_AS(track_points(c, starts, FlowDirection::Forward, 15, Scaling::None), DomainError);
  CHECK_THROWS_AS(track_points(c, starts, FlowDirection::Backward, 15, Scaling::None), DomainError);
}

TEST_CASE("monotone in the starting point") {
  for (Family f : {Family::Slit, Family::Arc}) {
    const ClusterState c = grow(build_particle(f, 0.05), 1000, 17);
    const AngleFlow flow(c);
    std::mt19937_64 gen(11);
    std::uniform_int_distribution<std::size_t> level(0, 1000);
    std::uniform_real_distribution<double> angle(-8.0, 8.0);
    for (int i = 0; i < 10000; ++i) {
      std::size_t m = level(gen);
      std::size_t n = level(gen);
      if (m > n) std::swap(m, n);
      double x = angle(gen);
      double y = angle(gen);
      if (x > y) std::swap(x, y);
      const FlowDirection dir = i % 2 ? FlowDirection::Forward : FlowDirection::Backward;
      const Version ver = i % 4 < 2 ? Version::Plus : Version::Minus;
      const FlowQuery query{m, n, dir, ver};
      REQUIRE(flow.apply(query, x) <= flow.apply(query, y));
    }
  }
}

TEST_CASE("periodic in the starting point") {
  const ClusterState c = grow(build_particle(Family::Slit, 0.05), 1000, 18);
  const AngleFlow flow(c);
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double x = angle(gen);
    const FlowQuery query{0, 1000, i % 2 ? FlowDirection::Forward : FlowDirection::Backward, Version::Plus};
    worst = std::max(worst, std::abs(flow.apply(query, x + kTwoPi) - flow.apply(query, x) - kTwoPi));
  }
  INFO("worst periodicity defect ", worst);
  CHECK(worst <= 1e-12);
}

TEST_CASE("weak-flow sandwich") {
  const ClusterState c = grow(build_particle(Family::Arc, 0.1), 300, 19);
  const AngleFlow flow(c);
  std::mt19937_64 gen(13);
  std::uniform_int_distribution<std::size_t> level(0, 300);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  for (int i = 0; i < 2000; ++i) {
    std::size_t a[3] = {level(gen), level(gen), level(gen)};
    std::sort(a, a + 3);
    const double x = angle(gen);
    for (FlowDirection dir : {FlowDirection::Forward, FlowDirection::Backward}) {
      auto q = [&](std::size_t m, std::size_t n, Version v) { return FlowQuery{m, n, dir, v}; };
      const bool fw = dir == FlowDirection::Forward;
      auto composed = [&](Version v) {
        return fw ? flow.apply(q(a[1], a[2], v), flow.apply(q(a[0], a[1], v), x))
                  : flow.apply(q(a[0], a[1], v), flow.apply(q(a[1], a[2], v), x));
      };
      const double lower = composed(Version::Minus);
      const double whole_minus = flow.apply(q(a[0], a[2], Version::Minus), x);
      const double whole_plus = flow.apply(q(a[0], a[2], Version::Plus), x);
      const double upper = composed(Version::Plus);
      CHECK(lower <= whole_minus);
      CHECK(whole_minus <= whole_plus);
      CHECK(whole_plus <= upper);
    }
  }
}

TEST_CASE("coalescence is absorbing") {
  const ClusterState c = grow(build_particle(Family::Slit, 0.05), 3000, 20);
  std::vector<FlowStart> starts;
  for (int i = 0; i < 40; ++i) starts.push_back({3000, kTwoPi * i / 40.0});
  const auto tr = track_points(c, starts, FlowDirection::Backward, 0, Scaling::None);
  std::size_t merged_pairs = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    for (std::size_t j = i + 1; j < tr.size(); ++j) {
      bool met = false;
      for (std::size_t r = 0; r < tr[i].angles.size(); ++r) {
        const bool together = std::abs(reduce_angle(tr[i].angles[r] - tr[j].angles[r]).angle) <= 1e-12;
        if (met) REQUIRE(together);
        met = met || together;
      }
      merged_pairs += met ? 1 : 0;
    }
  }
  CHECK(merged_pairs > 0);
  for (const auto& t : tr) {
    if (!t.coalesced_step) continue;
    const std::size_t level = *t.coalesced_step;
    for (std::size_t r = 0; r < t.steps.size(); ++r) {
      if (t.steps[r] <= level) CHECK(t.coalesced_with[r] >= 0);
      if (t.steps[r] > level) CHECK(t.coalesced_with[r] == -1);
    }
  }
}

TEST_CASE("PairBackwardFlow agrees with track_points") {
  for (Family f : {Family::Slit, Family::Arc}) {
    const ParticleSpec s = build_particle(f, 0.05);
    const std::size_t n = 3000;
    const ClusterState c = cluster_from_thetas(s, sample_thetas(n, 21));
    std::vector<double> reversed(c.thetas.rbegin(), c.thetas.rend());
    std::mt19937_64 gen(14);
    std::uniform_real_distribution<double> angle(-kPi, kPi);
    std::size_t merged = 0;
    for (int i = 0; i < 100; ++i) {
      const double x = angle(gen);
      const double y = angle(gen);
      PairBackwardFlow pair(s, x, y);
      const std::size_t at = pair.advance(reversed);
      const std::vector<FlowStart> starts = {{n, x}, {n, y}};
      const auto tr = track_points(c, starts, FlowDirection::Backward, 0, Scaling::None);
      CHECK(pair.merged() == tr[0].coalesced_step.has_value());
      if (pair.merged()) {
        ++merged;
        CHECK(n - at == *tr[0].coalesced_step);
      } else {
        CHECK(std::abs(reduce_angle(std::arg(pair.first()) - tr[0].angles.back()).angle) <= 1e-8);
        CHECK(std::abs(reduce_angle(std::arg(pair.second()) - tr[1].angles.back()).angle) <= 1e-8);
      }
    }
    CHECK(merged > 0);
  }
}

TEST_CASE("trajectories CSV") {
  const ClusterState c = grow(build_particle(Family::Slit, 0.1), 5, 2);
  const std::vector<FlowStart> starts = {{0, 0.0}, {2, 1.0}};
  const auto tr = track_points(c, starts, FlowDirection::Forward, 5, Scaling::None);
  const std::string csv = trajectories_csv(tr);
  CHECK(csv.rfind("step,time,point_id,lift,coalesced_with\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 6 + 4);
  CHECK(csv.find("\n0,0,0,0,-1\n") != std::string::npos);
}

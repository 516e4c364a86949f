#include "hl0/cbf_reference.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "merge_groups.hpp"

namespace hl0 {

std::string to_string(CbfDomain domain) { return domain == CbfDomain::Line ? "line" : "circle"; }

CbfDomain cbf_domain_from_string(const std::string& name) {
  if (name == "line") return CbfDomain::Line;
  if (name == "circle") return CbfDomain::Circle;
  throw DomainError("unknown domain '" + name + "' (expected line or circle)");
}

double bridge_hit_probability(double a, double b, double dt) {
  // Difference of two unit Brownian motions has variance 2 per unit time.
  return std::exp(-std::abs(a) * std::abs(b) / dt);
}

namespace {

// Did the difference process, moving from d0 to d1 over one step, reach a
// barrier (0 on the line, 2*pi*Z on the circle)? On success `barrier` holds
// the barrier touched.
bool meets(CbfDomain domain, double d0, double d1, double dt, bool bridge, CounterRng& rng, double& barrier) {
  if (domain == CbfDomain::Line) {
    barrier = 0.0;
    if (d0 == 0.0 || d0 * d1 <= 0.0) return true;
    return bridge && rng.uniform() < bridge_hit_probability(d0, d1, dt);
  }
  if (std::abs(d1 - d0) >= kTwoPi) throw std::logic_error("circle difference moved a full turn in one step");
  const double lower = kTwoPi * std::floor(d0 / kTwoPi);
  const double upper = lower + kTwoPi;
  if (d0 == lower || d1 <= lower) {
    barrier = lower;
    return true;
  }
  if (d1 >= upper) {
    barrier = upper;
    return true;
  }
  if (!bridge) return false;
  const double p_low = bridge_hit_probability(d0 - lower, d1 - lower, dt);
  const double p_up = bridge_hit_probability(upper - d0, upper - d1, dt);
  const double u = rng.uniform();
  if (u < p_low) {
    barrier = lower;
    return true;
  }
  if (u < std::min(1.0, p_low + p_up)) {
    barrier = upper;
    return true;
  }
  return false;
}

}  // namespace

std::vector<FlowTrajectory> simulate_cbf(const CbfConfig& config) {
  if (!(config.dt > 0.0)) throw DomainError("cbf: dt must be positive");
  if (config.starts.empty()) throw DomainError("cbf: no starting points");
  double t0 = config.starts[0].time;
  for (const auto& s : config.starts) {
    if (s.time > config.horizon) throw DomainError("cbf: start time after the horizon");
    t0 = std::min(t0, s.time);
  }
  const auto steps = static_cast<std::size_t>(std::ceil((config.horizon - t0) / config.dt - 1e-9));
  const std::size_t count = config.starts.size();
  const std::size_t every = std::max<std::size_t>(1, config.record_every);

  std::vector<std::size_t> join(count);
  for (std::size_t i = 0; i < count; ++i) {
    join[i] = static_cast<std::size_t>(std::max(0.0, std::ceil((config.starts[i].time - t0) / config.dt - 1e-9)));
  }

  CounterRng noise_rng(derive_seed(config.seed, 0));
  CounterRng bridge_rng(derive_seed(config.seed, 1));
  std::normal_distribution<double> normal(0.0, std::sqrt(config.dt));

  std::vector<FlowTrajectory> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i].point_id = i;
  MergeGroups groups(count);
  std::vector<double> pos(count, 0.0);
  std::vector<double> prev(count, 0.0);
  std::vector<bool> active(count, false);

  auto record = [&](std::size_t j) {
    for (std::size_t i = 0; i < count; ++i) {
      if (!active[i]) continue;
      out[i].steps.push_back(j);
      out[i].times.push_back(t0 + config.dt * static_cast<double>(j));
      out[i].angles.push_back(pos[groups.root[i]] + groups.offset[i]);
      out[i].coalesced_with.push_back(groups.partner(i));
    }
  };
  auto mark = [&](std::size_t r, std::size_t j) {
    for (std::size_t i : groups.members[r]) {
      if (!out[i].coalesced_step) out[i].coalesced_step = j;
    }
  };
  auto join_step = [&](std::size_t j) {
    bool joined = false;
    for (std::size_t i = 0; i < count; ++i) {
      if (join[i] != j) continue;
      active[i] = true;
      joined = true;
      pos[i] = config.starts[i].position;
      // A start sitting on another path joins it at once.
      for (std::size_t k = 0; k < count; ++k) {
        if (k == i || !active[k] || groups.root[k] != k || groups.root[i] != i) continue;
        const double diff = pos[i] - pos[k];
        const double shift = config.domain == CbfDomain::Circle ? kTwoPi * std::round(diff / kTwoPi) : 0.0;
        if (diff == shift) {
          const std::size_t keep = std::min(i, k);
          groups.merge_shift(k, i, shift);
          mark(keep, j);
        }
      }
    }
    return joined;
  };

  join_step(0);
  record(0);
  std::vector<std::size_t> order;
  for (std::size_t j = 1; j <= steps; ++j) {
    // Draws go to paths in order of position, so relabelling the starts
    // only relabels the output.
    order.clear();
    for (std::size_t i = 0; i < count; ++i) {
      if (active[i] && groups.root[i] == i) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pos[a] < pos[b]; });
    for (std::size_t i : order) {
      prev[i] = pos[i];
      pos[i] += normal(noise_rng);
    }
    // A merged pair continues from the lower path of the pair, and its
    // survivor takes that path's slot in `order`.
    for (std::size_t ia = 0; ia < order.size(); ++ia) {
      for (std::size_t ib = ia + 1; ib < order.size(); ++ib) {
        const std::size_t a = order[ia];
        const std::size_t b = order[ib];
        if (groups.root[a] != a || groups.root[b] != b) continue;
        double barrier = 0.0;
        if (meets(config.domain, prev[b] - prev[a], pos[b] - pos[a], config.dt, config.bridge_correction, bridge_rng,
                  barrier)) {
          groups.merge_shift(a, b, barrier);
          const std::size_t keep = std::min(a, b);
          if (keep == b) {
            pos[b] = pos[a] + barrier;
            prev[b] = prev[a] + barrier;
          }
          order[ia] = keep;
          order[ib] = keep == a ? b : a;
          mark(keep, j);
        }
      }
    }
    const bool joined = join_step(j);
    if (joined || j % every == 0 || j == steps) record(j);
  }
  return out;
}

std::optional<double> sample_pair_collision(CbfDomain domain, double d, double horizon, double dt,
                                            bool bridge_correction, CounterRng& rng) {
  if (d == 0.0) return 0.0;
  std::normal_distribution<double> normal(0.0, std::sqrt(dt));
  const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  double x = 0.0;
  double y = d;
  for (std::size_t j = 1; j <= steps; ++j) {
    const double d0 = y - x;
    x += normal(rng);
    y += normal(rng);
    double barrier = 0.0;
    if (meets(domain, d0, y - x, dt, bridge_correction, rng, barrier)) return dt * static_cast<double>(j);
  }
  return std::nullopt;
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double pair_collision_cdf(CbfDomain domain, double d, double t) {
  if (d < 0.0) throw DomainError("pair_collision_cdf: distance must be non-negative");
  if (t < 0.0) throw DomainError("pair_collision_cdf: time must be non-negative");
  if (domain == CbfDomain::Circle && d > kTwoPi) throw DomainError("pair_collision_cdf: circle distance exceeds 2*pi");
  if (d == 0.0 || (domain == CbfDomain::Circle && d == kTwoPi)) return 1.0;
  if (t == 0.0) return 0.0;
  const double s = std::sqrt(2.0 * t);
  if (domain == CbfDomain::Line) return std::erfc(d / (2.0 * std::sqrt(t)));

  // Survival on (0, L) by the method of images with period 2L.
  constexpr double L = kTwoPi;
  const long kmax = static_cast<long>(std::ceil(7.0 * s / (2.0 * L))) + 2;
  double survival = 0.0;
  for (long k = -kmax; k <= kmax; ++k) {
    const double shift = 2.0 * L * static_cast<double>(k);
    survival += normal_cdf((L - d + shift) / s) - normal_cdf((-d + shift) / s) - normal_cdf((L + d + shift) / s) +
                normal_cdf((d + shift) / s);
  }
  return std::clamp(1.0 - survival, 0.0, 1.0);
}

}  // namespace hl0

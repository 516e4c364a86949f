#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hl0/hm_flow.hpp"
#include "hl0/rng.hpp"

namespace hl0 {

enum class CbfDomain { Line, Circle };

std::string to_string(CbfDomain domain);
CbfDomain cbf_domain_from_string(const std::string& name);

struct CbfStart {
  double time = 0.0;
  double position = 0.0;
};

struct CbfConfig {
  CbfDomain domain = CbfDomain::Line;
  std::vector<CbfStart> starts;
  double horizon = 1.0;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  bool bridge_correction = true;
  /// Rows are kept every record_every grid steps (and at the horizon).
  std::size_t record_every = 1;
};

/// Coalescing Brownian motions with unit variance per unit time on the grid
/// t_j = t_0 + j*dt, t_0 the earliest start. A start joins at the first grid
/// time not before its start time. On the circle, lifts are compared modulo
/// 2*pi. One trajectory per start; steps hold grid indices.
std::vector<FlowTrajectory> simulate_cbf(const CbfConfig& config);

/// Time at which two paths started at distance d (time 0) first meet, if
/// before the horizon. Uses the same grid and crossing rules as simulate_cbf.
std::optional<double> sample_pair_collision(CbfDomain domain, double d, double horizon, double dt,
                                            bool bridge_correction, CounterRng& rng);

/// P(T <= t) for the meeting time T of two independent standard Brownian
/// motions at distance d. Circle: first hit of {0, 2*pi} by a variance-2
/// Brownian motion from d, by an image sum truncated at 1e-10.
double pair_collision_cdf(CbfDomain domain, double d, double t);

/// Probability that a step of the difference process from a to b (both on
/// the same side of a barrier at distance |a|, |b|) touched the barrier.
double bridge_hit_probability(double a, double b, double dt);

}  // namespace hl0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hl0/cluster_engine.hpp"
#include "hl0/particle_maps.hpp"

namespace hl0 {

enum class FlowDirection { Forward, Backward };
enum class Scaling { None, Long, Local };

std::string to_string(FlowDirection direction);
std::string to_string(Scaling scaling);
FlowDirection direction_from_string(const std::string& name);
Scaling scaling_from_string(const std::string& name);

/// Forward: g_{Theta_n} o ... o g_{Theta_{m+1}}.
/// Backward: f_{Theta_{m+1}} o ... o f_{Theta_n}.
struct FlowQuery {
  std::size_t m = 0;
  std::size_t n = 0;
  FlowDirection direction = FlowDirection::Forward;
  Version version = Version::Plus;
};

/// Harmonic measure flow driven by a fixed angle sequence Theta_1..Theta_N
/// (thetas[k-1] = Theta_k). Needs no cluster geometry.
class AngleFlow {
 public:
  AngleFlow(const ParticleSpec& spec, std::span<const double> thetas);
  explicit AngleFlow(const ClusterState& cluster) : AngleFlow(cluster.spec, cluster.thetas) {}

  std::size_t size() const { return thetas_.size(); }
  const CircleMaps& maps() const { return maps_; }
  const ParticleSpec& spec() const { return spec_; }

  /// One rotated map at level k: x -> Theta_k + h(x - Theta_k).
  double step(MapDirection dir, Version version, std::size_t k, double x) const {
    return maps_.rotated(dir, version, thetas_[k - 1], x);
  }

  double apply(const FlowQuery& query, double x) const;

 private:
  ParticleSpec spec_;
  CircleMaps maps_;
  std::span<const double> thetas_;
};

double flow_map(const ClusterState& cluster, const FlowQuery& query, double x);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = false;
  bool hi_closed = true;
};

/// Smallest and largest integers in rate*I; empty when there are none, in
/// which case the flow over I is the identity. Endpoints within 1e-9 of an
/// integer are snapped to it before the open/closed test.
std::optional<std::pair<long long, long long>> embed_interval(const Interval& interval, double rate);

/// d_D for periodic pairs. Turning both completed graphs by 45 degrees makes
/// them graphs of 1-Lipschitz functions V(u), u = x + y, and d_D is half the
/// sup distance between them; the sup is taken on a grid of one period plus
/// the images of the jumps, then refined by golden-section search to `tol`.
double metric_dD(const MonotonePair& f, const MonotonePair& g, double tol = 1e-9);

/// Window distance d_n: the d_D condition imposed for x in [-n, n - eps] only.
double metric_window(const MonotonePair& f, const MonotonePair& g, double half_width, double tol = 1e-9);

/// sum_{n>=1} 2^-n min(d_n, 1), truncated after 32 terms.
double metric_dDbar(const MonotonePair& f, const MonotonePair& g, double tol = 1e-9);

struct FlowStart {
  std::size_t level = 0;
  double lift = 0.0;
};

struct FlowTrajectory {
  std::size_t point_id = 0;
  Scaling scaling = Scaling::None;
  std::vector<std::size_t> steps;   // levels of the flow
  std::vector<double> times;        // strictly increasing
  std::vector<double> angles;       // lifts
  std::vector<long long> coalesced_with;  // partner id per row, -1 if none
  std::optional<std::size_t> coalesced_step;
};

/// Tracks points under the flow. Forward: each start moves from its level up
/// to `upto`. Backward: each start moves from its level down to `upto`.
/// Times are k (None), k/rho (Long) or c*k (Local, angles / sqrt(delta*)),
/// counted from the first level for the forward flow and as elapsed levels
/// below the highest start for the backward flow. Points whose lifts agree
/// modulo 2pi to 1e-12 are merged for good.
std::vector<FlowTrajectory> track_points(const AngleFlow& flow, std::span<const FlowStart> starts,
                                         FlowDirection direction, std::size_t upto, Scaling scaling);

std::vector<FlowTrajectory> track_points(const ClusterState& cluster, std::span<const FlowStart> starts,
                                         FlowDirection direction, std::size_t upto, Scaling scaling);

/// CSV with header "step,time,point_id,lift,coalesced_with".
void write_trajectories_csv(const std::vector<FlowTrajectory>& trajectories, const std::string& path);
std::string trajectories_csv(const std::vector<FlowTrajectory>& trajectories);

/// Two boundary points under the backward flow, carried as unit complex
/// numbers; the fast path for coalescence statistics. Coalescence is exact:
/// both points land in the same flat interval and receive the same value.
class PairBackwardFlow {
 public:
  PairBackwardFlow(const ParticleSpec& spec, double x, double y);

  /// Applies f_theta for each theta in order until the pair merges. Returns
  /// the 1-based position within `thetas` of the merging map, or 0.
  std::size_t advance(std::span<const double> thetas);

  bool merged() const { return merged_; }
  Complex first() const { return u_; }
  Complex second() const { return v_; }

 private:
  Complex f_unit(Complex w) const;

  Family family_;
  double t_, r_, cos_q_, scale_;
  Complex u_, v_;
  bool merged_ = false;
};

}  // namespace hl0

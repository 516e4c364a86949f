#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "hl0/cluster_engine.hpp"
#include "hl0/hm_flow.hpp"

namespace hl0 {

/// log|w| + i arg w, arg in (-pi, pi].
Complex log_coord(Complex w);

struct FingerSet {
  Complex seed;
  std::vector<std::size_t> chain;  // child first, strictly decreasing
  Complex base_point;              // on the imaginary axis
  /// Multiple of 2*pi added to every angle so the finger sits near the seed.
  double shift = 0.0;
  PlanarSet points;                // log coordinates, base point last
};

struct GapTrajectory {
  Complex seed;
  std::vector<std::size_t> levels;
  std::vector<double> angles;  // forward-flow lifts
  PlanarSet points;            // c*k + i*angle_k
};

/// Nearest-particle search over a fixed cluster. Particles are ranked by a
/// cheap bound from their base and tip points in log coordinates; sampled
/// boundaries are only computed for particles that can still win.
class FingerFinder {
 public:
  /// resolution 0 means max(16, ceil(64 * delta / 0.1)).
  explicit FingerFinder(const ClusterState& cluster, std::size_t resolution = 0);

  FingerSet finger_of(Complex z) const;
  /// Index of the particle nearest to z and the 2*pi*m translate used.
  std::pair<std::size_t, double> nearest(Complex z) const;

  std::size_t resolution() const { return resolution_; }
  /// Sampled boundary of particle k in log coordinates, unwrapped along the curve.
  PlanarSet log_boundary(std::size_t k) const;

 private:
  const ClusterState& cluster_;
  std::size_t resolution_;
  std::vector<Complex> base_;    // log coordinates
  std::vector<double> radius_;   // bound on the particle's extent around base
};

FingerSet finger_of(const ClusterState& cluster, Complex z);

/// Lifted angle of a finger at every level 0..chain[0]-1, computed particle
/// by particle along the chain. Entry k is the finger's angle at level k.
/// Throws if a pulled-back angle is absorbed by a particle other than the
/// recorded parent.
std::vector<double> finger_track(const ClusterState& cluster, const FingerSet& finger);

GapTrajectory gap_proxy_of(const ClusterState& cluster, Complex z, std::size_t upto);

enum class ScaleKind { Sigma, SigmaBar };

struct ScaledPoint {
  // Extended precision keeps the inverse exact.
  long double s = 0.0L;
  long double x = 0.0L;
};

struct ScaledSet {
  std::vector<ScaledPoint> points;
  ScaleKind scaling = ScaleKind::Sigma;
};

/// Sigma: (r, theta) -> (delta* r, theta). SigmaBar: (r, theta) -> (r, theta / sqrt(delta*)).
ScaledSet rescale(const PlanarSet& points, const ParticleSpec& spec, ScaleKind which);
PlanarSet unscale(const ScaledSet& scaled, const ParticleSpec& spec);
/// The scaled points rounded to double, s + i x.
PlanarSet as_planar(const ScaledSet& scaled);

/// Hausdorff distance between finite point sets.
double hausdorff(const PlanarSet& a, const PlanarSet& b);
/// sup over a of the distance to b.
double directed_hausdorff(const PlanarSet& a, const PlanarSet& b);

nlohmann::json to_json(const FingerSet& finger, const ParticleSpec& spec, ScaleKind scaling);
nlohmann::json to_json(const GapTrajectory& gap, const ParticleSpec& spec, ScaleKind scaling);

}  // namespace hl0

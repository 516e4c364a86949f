#include "hl0/fingers_gaps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/index/rtree.hpp>

namespace hl0 {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

Complex log_coord(Complex w) { return {std::log(std::abs(w)), std::arg(w)}; }

namespace {

double nearest_multiple(double x) { return kTwoPi * std::round(x / kTwoPi); }

// Log coordinates along a curve, continuous in the angle.
PlanarSet unwrap_log(const PlanarSet& curve) {
  PlanarSet out;
  out.reserve(curve.size());
  for (const Complex& w : curve) {
    Complex l = log_coord(w);
    if (!out.empty()) l.imag(l.imag() + nearest_multiple(out.back().imag() - l.imag()));
    out.push_back(l);
  }
  return out;
}

double segment_distance(Complex z, Complex a, Complex b) {
  const Complex ab = b - a;
  const double len2 = std::norm(ab);
  if (len2 == 0.0) return std::abs(z - a);
  const double s = std::clamp(((z - a) * std::conj(ab)).real() / len2, 0.0, 1.0);
  return std::abs(z - (a + s * ab));
}

double polyline_distance(Complex z, const PlanarSet& line) {
  double best = std::abs(z - line.front());
  for (std::size_t i = 0; i + 1 < line.size(); ++i) best = std::min(best, segment_distance(z, line[i], line[i + 1]));
  return best;
}

Complex basic_tip(const ParticleSpec& spec) {
  if (spec.family == Family::Slit) return 1.0 + spec.delta;
  return (1.0 + spec.r) / (1.0 - spec.r);
}

std::string scale_name(ScaleKind kind) { return kind == ScaleKind::Sigma ? "sigma" : "sigmabar"; }

}  // namespace

// ---------------------------------------------------------------------------
// FingerFinder

FingerFinder::FingerFinder(const ClusterState& cluster, std::size_t resolution)
    : cluster_(cluster),
      resolution_(resolution != 0
                      ? resolution
                      : std::max<std::size_t>(16, static_cast<std::size_t>(std::ceil(64.0 * cluster.spec.delta / 0.1)))) {
  const std::size_t n = cluster.n();
  std::vector<std::size_t> levels;
  std::vector<Complex> points;
  for (std::size_t k = 1; k <= n; ++k) {
    levels.push_back(k - 1);
    points.push_back(cluster.rotation(k) * basic_tip(cluster.spec));
    if (!cluster.records[k - 1].attach_point) {
      levels.push_back(k - 1);
      points.push_back(cluster.rotation(k));
    }
  }
  const std::vector<Complex> images = eval_phi_many(cluster, levels, points);
  base_.resize(n);
  radius_.resize(n);
  std::size_t at = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    const Complex tip = images[at++];
    const auto& rec = cluster.records[k - 1];
    const Complex attach = rec.attach_point ? *rec.attach_point : images[at++];
    base_[k - 1] = log_coord(attach);
    const PlanarSet pair = unwrap_log({attach, tip});
    // Generous multiple of the base-to-tip length.
    radius_[k - 1] = 3.0 * std::abs(pair[1] - pair[0]) + 1e-12;
  }
}

PlanarSet FingerFinder::log_boundary(std::size_t k) const {
  return unwrap_log(particle_boundary(cluster_, k, resolution_));
}

std::pair<std::size_t, double> FingerFinder::nearest(Complex z) const {
  if (cluster_.n() == 0) throw DomainError("finger_of: cluster is empty");
  if (z.real() < 0.0) throw DomainError("finger_of: seed must have non-negative real part");
  const double m0 = nearest_multiple(z.imag());
  const Complex z0 = z - Complex(0.0, m0);

  std::vector<std::tuple<double, std::size_t, double>> candidates;
  for (std::size_t k = 1; k <= cluster_.n(); ++k) {
    for (double t : {-kTwoPi, 0.0, kTwoPi}) {
      const double bound = std::abs(z0 - (base_[k - 1] + Complex(0.0, t))) - radius_[k - 1];
      candidates.emplace_back(bound, k, t);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  double best_t = 0.0;
  for (const auto& [bound, k, t] : candidates) {
    if (bound > best) break;
    const double d = polyline_distance(z0 - Complex(0.0, t), log_boundary(k));
    if (d < best || (d == best && k < best_k)) {
      best = d;
      best_k = k;
      best_t = t;
    }
  }
  return {best_k, best_t + m0};
}

FingerSet FingerFinder::finger_of(Complex z) const {
  const auto [k0, translate] = nearest(z);
  FingerSet finger;
  finger.seed = z;
  for (std::size_t k = k0; k != 0; k = cluster_.records[k - 1].parent) finger.chain.push_back(k);
  // Shift relating circle lifts of the flow to the seed's branch of log coordinates.
  finger.shift = translate + nearest_multiple(base_[k0 - 1].imag() - cluster_.theta(k0));
  const std::vector<double> track = finger_track(cluster_, finger);
  for (std::size_t m : finger.chain) {
    PlanarSet curve = log_boundary(m);
    const double target = track[m - 1] + finger.shift;
    const double move = nearest_multiple(target - curve.front().imag());
    for (Complex& p : curve) finger.points.push_back(p + Complex(0.0, move));
  }
  finger.base_point = Complex(0.0, track[0] + finger.shift);
  finger.points.push_back(finger.base_point);
  return finger;
}

FingerSet finger_of(const ClusterState& cluster, Complex z) { return FingerFinder(cluster).finger_of(z); }

std::vector<double> finger_track(const ClusterState& cluster, const FingerSet& finger) {
  if (finger.chain.empty()) throw DomainError("finger_track: empty chain");
  const AngleFlow flow(cluster);
  const double q = cluster.spec.q;
  const std::size_t top = finger.chain.front();
  std::vector<double> track(top);
  double value = cluster.theta(top);
  for (std::size_t i = 0; i < finger.chain.size(); ++i) {
    const std::size_t m = finger.chain[i];
    const std::size_t parent = i + 1 < finger.chain.size() ? finger.chain[i + 1] : 0;
    if (cluster.records[m - 1].parent != parent) throw DomainError("finger_track: chain disagrees with records");
    track[m - 1] = value;
    // Pull particle m's attachment angle back until its parent absorbs it.
    std::size_t k = m - 1;
    for (; k > parent; --k) {
      if (std::abs(reduce_angle(value - cluster.theta(k)).angle) < q) {
        throw DomainError("finger_track: absorbed by particle " + std::to_string(k) + " instead of the parent");
      }
      value = flow.step(MapDirection::F, Version::Plus, k, value);
      track[k - 1] = value;
    }
    if (parent != 0) {
      const ReducedAngle red = reduce_angle(value - cluster.theta(parent));
      if (!(std::abs(red.angle) < q)) throw DomainError("finger_track: parent does not absorb the chain");
      // The parent's own attachment angle, on the branch reached by the flow.
      value = cluster.theta(parent) + kTwoPi * red.winding;
    }
  }
  return track;
}

GapTrajectory gap_proxy_of(const ClusterState& cluster, Complex z, std::size_t upto) {
  if (z.real() < 0.0) throw DomainError("gap_proxy_of: seed must have non-negative real part");
  if (upto > cluster.n()) throw DomainError("gap_proxy_of: upto exceeds cluster size");
  const double c = cluster.spec.c;
  double level = z.real() / c;
  if (std::abs(level - std::round(level)) <= 1e-9 * std::max(1.0, level)) level = std::round(level);
  const auto m = static_cast<std::size_t>(std::ceil(level));
  if (m > upto) throw DomainError("gap_proxy_of: seed lies beyond level upto");
  GapTrajectory gap;
  gap.seed = z;
  const AngleFlow flow(cluster);
  double x = z.imag();
  for (std::size_t k = m;; ++k) {
    gap.levels.push_back(k);
    gap.angles.push_back(x);
    gap.points.emplace_back(c * static_cast<double>(k), x);
    if (k == upto) break;
    x = flow.step(MapDirection::G, Version::Plus, k + 1, x);
  }
  return gap;
}

// ---------------------------------------------------------------------------
// Scaling

ScaledSet rescale(const PlanarSet& points, const ParticleSpec& spec, ScaleKind which) {
  ScaledSet out;
  out.scaling = which;
  out.points.reserve(points.size());
  const long double ds = spec.delta_star;
  const long double root = std::sqrt(ds);
  for (const Complex& p : points) {
    if (which == ScaleKind::Sigma) {
      out.points.push_back({ds * p.real(), p.imag()});
    } else {
      out.points.push_back({p.real(), p.imag() / root});
    }
  }
  return out;
}

PlanarSet unscale(const ScaledSet& scaled, const ParticleSpec& spec) {
  PlanarSet out;
  out.reserve(scaled.points.size());
  const long double ds = spec.delta_star;
  const long double root = std::sqrt(ds);
  for (const auto& p : scaled.points) {
    if (scaled.scaling == ScaleKind::Sigma) {
      out.emplace_back(static_cast<double>(p.s / ds), static_cast<double>(p.x));
    } else {
      out.emplace_back(static_cast<double>(p.s), static_cast<double>(p.x * root));
    }
  }
  return out;
}

PlanarSet as_planar(const ScaledSet& scaled) {
  PlanarSet out;
  out.reserve(scaled.points.size());
  for (const auto& p : scaled.points) out.emplace_back(static_cast<double>(p.s), static_cast<double>(p.x));
  return out;
}

// ---------------------------------------------------------------------------
// Hausdorff

double directed_hausdorff(const PlanarSet& a, const PlanarSet& b) {
  if (a.empty() || b.empty()) throw DomainError("hausdorff: empty point set");
  using Point = bg::model::d2::point_xy<double>;
  std::vector<Point> pts;
  pts.reserve(b.size());
  for (const Complex& p : b) pts.emplace_back(p.real(), p.imag());
  const bgi::rtree<Point, bgi::rstar<16>> tree(pts.begin(), pts.end());
  double worst = 0.0;
  for (const Complex& p : a) {
    const Point query(p.real(), p.imag());
    for (auto it = tree.qbegin(bgi::nearest(query, 1)); it != tree.qend(); ++it) {
      worst = std::max(worst, std::hypot(it->x() - p.real(), it->y() - p.imag()));
    }
  }
  return worst;
}

double hausdorff(const PlanarSet& a, const PlanarSet& b) {
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

// ---------------------------------------------------------------------------
// Export

namespace {

nlohmann::json scaled_points(const PlanarSet& pts, const ParticleSpec& spec, ScaleKind scaling) {
  nlohmann::json out = nlohmann::json::array();
  for (const Complex& p : as_planar(rescale(pts, spec, scaling))) out.push_back({p.real(), p.imag()});
  return out;
}

}  // namespace

nlohmann::json to_json(const FingerSet& finger, const ParticleSpec& spec, ScaleKind scaling) {
  return {{"seed_re", finger.seed.real()},
          {"seed_im", finger.seed.imag()},
          {"scaling", scale_name(scaling)},
          {"points", scaled_points(finger.points, spec, scaling)},
          {"chain", finger.chain}};
}

nlohmann::json to_json(const GapTrajectory& gap, const ParticleSpec& spec, ScaleKind scaling) {
  return {{"seed_re", gap.seed.real()},
          {"seed_im", gap.seed.imag()},
          {"scaling", scale_name(scaling)},
          {"points", scaled_points(gap.points, spec, scaling)},
          {"levels", gap.levels}};
}

}  // namespace hl0

#include "hl0/particle_maps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace hl0 {

namespace {

constexpr Complex kI{0.0, 1.0};

constexpr double kInnerSq = (1.0 - ParticleSpec::kBoundaryTol) * (1.0 - ParticleSpec::kBoundaryTol);
constexpr double kOuterSq = (1.0 + ParticleSpec::kBoundaryTol) * (1.0 + ParticleSpec::kBoundaryTol);

Complex snap_to_circle(Complex z) { return z / std::sqrt(std::norm(z)); }

void require_outside_disc(Complex z, const char* what) {
  if (!(std::norm(z) >= kInnerSq)) {
    throw DomainError(std::string(what) + ": |z| < 1 lies inside the unit disc");
  }
}

bool on_circle(Complex z) { return std::norm(z) <= kOuterSq; }

// Principal square root; cheaper than the library version, which guards
// against overflow we never reach.
inline Complex principal_sqrt(Complex w) {
  const double a = w.real();
  const double b = w.imag();
  const double m = std::sqrt(a * a + b * b);
  if (m == 0.0) return {0.0, b};
  if (a >= 0.0) {
    const double x = std::sqrt(0.5 * (m + a));
    return {x, b / (2.0 * x)};
  }
  const double y = std::sqrt(0.5 * (m - a));
  return {std::abs(b) / (2.0 * y), std::copysign(y, b)};
}

// Slit, via zeta = (z-1)/(z+1) which sends the exterior disc to Re(zeta) > 0.
// In the open half-plane both square roots have positive real part, so the
// principal root is the right branch. On the unit circle the products of
// principal roots below keep their cuts inside the particle and return the
// limit from outside.
Complex slit_F(double t, Complex z, bool boundary) {
  if (z == Complex{-1.0, 0.0}) return z;
  Complex s;
  if (boundary) {
    const Complex zeta = (z - 1.0) / (z + 1.0);
    const double a = std::sqrt(t / (1.0 - t));
    const Complex eta = std::sqrt(1.0 - t) * std::sqrt(zeta - kI * a) * std::sqrt(zeta + kI * a);
    s = (1.0 + eta) * (z + 1.0);
  } else {
    // (z+1)*eta, with the sign fixed by Re(eta) > 0.
    const Complex zp = z + 1.0;
    Complex root = principal_sqrt(z * z - 2.0 * (1.0 - 2.0 * t) * z + 1.0);
    if (root.real() * zp.real() + root.imag() * zp.imag() < 0.0) root = -root;
    s = zp + root;
  }
  return s * s * std::conj(z) / (4.0 * (1.0 - t) * std::norm(z));
}

Complex slit_G(double t, Complex z, bool boundary) {
  if (z == Complex{-1.0, 0.0}) return z;
  Complex s;
  if (boundary) {
    const Complex zeta = (z - 1.0) / (z + 1.0);
    const double st = std::sqrt(t);
    const Complex eta = std::sqrt(zeta - st) * std::sqrt(zeta + st) / std::sqrt(1.0 - t);
    s = (1.0 + eta) * (z + 1.0);
  } else {
    const Complex zp = z + 1.0;
    Complex root = principal_sqrt((z * z - 2.0 * ((1.0 + t) / (1.0 - t)) * z + 1.0));
    if (root.real() * zp.real() + root.imag() * zp.imag() < 0.0) root = -root;
    s = zp + root;
  }
  return (1.0 - t) * s * s * std::conj(z) / (4.0 * std::norm(z));
}

// |w-1|^2 - r^2 |w+1|^2: negative strictly inside the arc particle's disc.
double apollonius(double r, Complex w) { return std::norm(w - 1.0) - r * r * std::norm(w + 1.0); }

Complex arc_boundary_F(const ParticleSpec& spec, const CircleMaps& maps, Complex z) {
  const double theta = std::arg(z);
  if (std::abs(theta) > spec.q) return std::polar(1.0, maps.f_reduced(Version::Plus, theta));
  // Point of J: lands on the arc r*e^{i alpha} in the half-plane picture.
  const double r = spec.r;
  const double tan_half = std::sin(theta / 2) / std::cos(theta / 2);
  const double cos_alpha = std::clamp(-(1.0 - r * r) * tan_half / (2.0 * r), -1.0, 1.0);
  const Complex w = std::polar(r, std::acos(cos_alpha));
  return (kI + w) / (kI - w);
}

Complex arc_F(double g, double r, Complex z) {
  const Complex b = 1.0 + z;
  Complex s = principal_sqrt(b * b - 4.0 * g * g * z);
  if ((std::conj(b) * s).real() < 0.0) s = -s;
  const Complex w1 = (b + s) / (2.0 * g);
  const Complex w2 = z / w1;
  return apollonius(r, w1) >= apollonius(r, w2) ? w1 : w2;
}

Complex arc_G(double g, Complex z) { return z * (g * z - 1.0) / (z - g); }

}  // namespace

std::string to_string(Family family) { return family == Family::Slit ? "slit" : "arc"; }

Family family_from_string(const std::string& name) {
  if (name == "slit") return Family::Slit;
  if (name == "arc") return Family::Arc;
  throw DomainError("unknown particle family '" + name + "' (expected slit or arc)");
}

ParticleSpec build_particle(Family family, double delta, BuildOptions options) {
  ParticleSpec spec;
  spec.family = family;
  spec.delta = delta;
  if (family == Family::Slit) {
    if (!(delta > 0.0 && delta <= 1.0)) {
      throw DomainError("slit particle needs delta in (0, 1], got " + std::to_string(delta));
    }
    spec.t = delta * delta / ((2.0 + delta) * (2.0 + delta));
    spec.c = -std::log1p(-spec.t);
    spec.p = 0.0;
    spec.q = 2.0 * std::atan2(std::sqrt(spec.t), std::sqrt(1.0 - spec.t));
  } else {
    if (!(delta > 0.0 && delta <= 1.0 / 3.0)) {
      throw DomainError("arc particle needs delta in (0, 1/3], got " + std::to_string(delta));
    }
    spec.r = delta / (2.0 - delta);
    const double r2 = spec.r * spec.r;
    spec.gamma = (1.0 - r2) / (1.0 + r2);
    spec.c = std::log1p(r2) - std::log1p(-r2);
    spec.p = 2.0 * std::atan(spec.r);
    // The arc endpoints e^{+-ip} are sent to e^{+-2ip}.
    spec.q = 4.0 * std::atan(spec.r);
  }
  const MonotonePair g = MonotonePair::from_particle(spec, MapDirection::G);
  spec.rho = rho_of(g);
  spec.delta_star = 1.0 / (spec.rho * spec.c);
  if (options.compute_lambda) spec.lambda1 = lambda_of(g, spec.rho, 1.0);
  return spec;
}

ReducedAngle reduce_angle(double x) {
  double winding = -std::floor((kPi - x) / kTwoPi);
  double angle = x - kTwoPi * winding;
  if (angle > kPi) {
    angle -= kTwoPi;
    winding += 1.0;
  } else if (angle <= -kPi) {
    angle += kTwoPi;
    winding -= 1.0;
  }
  return {winding, angle};
}

// ---------------------------------------------------------------------------
// CircleMaps

CircleMaps::CircleMaps(const ParticleSpec& spec)
    : family_(spec.family), t_(spec.t), r_(spec.r), p_(spec.p), q_(spec.q) {}

double CircleMaps::g_positive(double d) const {
  const double s = std::sin(0.5 * d);
  const double k = std::cos(0.5 * d);
  if (family_ == Family::Slit) {
    return 2.0 * std::atan2(std::sqrt(s * s + t_ * k * k), k * std::sqrt(1.0 - t_));
  }
  const double r2 = r_ * r_;
  return 2.0 * std::atan2(s * s + r2 * k * k, s * k * (1.0 - r2));
}

double CircleMaps::f_positive(double d) const {
  const double s = std::sin(0.5 * d);
  const double k = std::cos(0.5 * d);
  if (family_ == Family::Slit) {
    return 2.0 * std::atan2(std::sqrt(std::max(0.0, (1.0 - t_) * s * s - t_ * k * k)), k);
  }
  const double u = (1.0 - r_ * r_) * s;
  return 2.0 * std::atan2(u + std::sqrt(std::max(0.0, u * u - 4.0 * r_ * r_ * k * k)), 2.0 * k);
}

double CircleMaps::g_reduced(Version version, double d) const {
  if (d == 0.0) return version == Version::Plus ? q_ : -q_;
  if (d > 0.0) return d <= p_ ? q_ : g_positive(d);
  return -d <= p_ ? -q_ : -g_positive(-d);
}

double CircleMaps::f_reduced(Version version, double d) const {
  if (std::abs(d) < q_) return 0.0;
  if (family_ == Family::Arc) {
    if (d == q_) return version == Version::Plus ? p_ : 0.0;
    if (d == -q_) return version == Version::Plus ? 0.0 : -p_;
  }
  return d > 0.0 ? f_positive(d) : -f_positive(-d);
}

std::vector<double> CircleMaps::breakpoints(MapDirection dir) const {
  if (dir == MapDirection::F) return {-q_, q_};
  if (family_ == Family::Slit) return {0.0};
  return {-p_, 0.0, p_};
}

// ---------------------------------------------------------------------------
// PlaneMaps

PlaneMaps::PlaneMaps(const ParticleSpec& spec)
    : family_(spec.family), t_(spec.t), r_(spec.r), gamma_(spec.gamma) {}

Complex PlaneMaps::F(Complex z) const {
  return family_ == Family::Slit ? slit_F(t_, z, false) : arc_F(gamma_, r_, z);
}

Complex PlaneMaps::G(Complex z) const {
  return family_ == Family::Slit ? slit_G(t_, z, false) : arc_G(gamma_, z);
}

// ---------------------------------------------------------------------------
// MonotonePair

MonotonePair::MonotonePair(Fn plus, bool periodic, std::vector<double> breakpoints)
    : plus_(plus), minus_(std::move(plus)), periodic_(periodic), breakpoints_(std::move(breakpoints)) {}

MonotonePair::MonotonePair(Fn plus, Fn minus, bool periodic, std::vector<double> breakpoints)
    : plus_(std::move(plus)), minus_(std::move(minus)), periodic_(periodic), breakpoints_(std::move(breakpoints)) {}

MonotonePair MonotonePair::identity(bool periodic) {
  return MonotonePair([](double x) { return x; }, periodic);
}

MonotonePair MonotonePair::from_particle(const ParticleSpec& spec, MapDirection dir) {
  const CircleMaps maps(spec);
  return MonotonePair([maps, dir](double x) { return maps.lift(dir, Version::Plus, x); },
                      [maps, dir](double x) { return maps.lift(dir, Version::Minus, x); }, true,
                      maps.breakpoints(dir));
}

// ---------------------------------------------------------------------------
// Maps

bool in_particle(const ParticleSpec& spec, Complex z) {
  constexpr double tol = ParticleSpec::kBoundaryTol;
  if (spec.family == Family::Slit) {
    return std::abs(z.imag()) <= tol && z.real() > 1.0 - tol && z.real() <= 1.0 + spec.delta + tol;
  }
  return std::norm(z) > kInnerSq && apollonius(spec.r, z) < -tol;
}

bool in_cluster_element(const ParticleSpec& spec, Complex z) {
  return on_circle(z) || in_particle(spec, z);
}

Complex map_F(const ParticleSpec& spec, Complex z) {
  require_outside_disc(z, "map_F");
  const bool boundary = on_circle(z);
  if (boundary) z = snap_to_circle(z);
  if (spec.family == Family::Slit) return slit_F(spec.t, z, boundary);
  if (boundary) return arc_boundary_F(spec, CircleMaps(spec), z);
  return arc_F(spec.gamma, spec.r, z);
}

Complex map_G(const ParticleSpec& spec, Complex z) {
  require_outside_disc(z, "map_G");
  if (in_particle(spec, z)) throw DomainError("map_G: point inside cluster element");
  const bool boundary = on_circle(z);
  if (boundary) z = snap_to_circle(z);
  if (spec.family == Family::Slit) return slit_G(spec.t, z, boundary);
  return arc_G(spec.gamma, z);
}

double circle_map(const ParticleSpec& spec, MapDirection dir, double theta) {
  return CircleMaps(spec).lift(dir, Version::Plus, theta);
}

// ---------------------------------------------------------------------------
// Quadrature-based constants

double integrate_period(const std::function<double(double)>& h, std::span<const double> breakpoints,
                        double rel_tol) {
  std::vector<double> nodes{-kPi, kPi};
  for (double b : breakpoints) {
    const double d = reduce_angle(b).angle;
    if (d > -kPi && d < kPi) nodes.push_back(d);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  // Globally adaptive: always bisect the segment with the largest error
  // estimate, so a stubborn segment with a tiny integral cannot stall the
  // whole computation.
  using Quad = boost::math::quadrature::gauss_kronrod<double, 15>;
  struct Segment {
    double a, b, value, error;
    bool operator<(const Segment& o) const { return error < o.error; }
  };
  auto rule = [&h](double a, double b) {
    double err = 0.0;
    const double v = Quad::integrate(h, a, b, 0, 0.0, &err);
    return Segment{a, b, v, err};
  };
  std::priority_queue<Segment> heap;
  double total = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    if (nodes[i + 1] - nodes[i] <= 0.0) continue;
    const Segment s = rule(nodes[i], nodes[i + 1]);
    total += s.value;
    error += s.error;
    heap.push(s);
  }
  constexpr int kMaxSplits = 4000;
  for (int split = 0; split < kMaxSplits && !heap.empty(); ++split) {
    if (error <= rel_tol * std::abs(total) || error <= 1e-300) break;
    const Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) continue;  // cannot split further
    const Segment left = rule(worst.a, mid);
    const Segment right = rule(mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  return total;
}

double rho_of(const MonotonePair& g) {
  if (!g.periodic()) throw DomainError("rho_of: disturbance must be 2*pi periodic");
  const double integral = integrate_period(
      [&g](double x) {
        const double v = g.offset(x);
        return v * v;
      },
      g.breakpoints(), 1e-11);
  if (!(integral > 0.0)) throw DomainError("rho_of: degenerate disturbance (g_0 vanishes)");
  return kTwoPi / integral;
}

namespace {

// (rho/2pi) * int |g_0(x+a) g_0(x)| dx, evaluated with the breakpoints of both
// factors as quadrature nodes.
class OverlapIntegral {
 public:
  OverlapIntegral(const MonotonePair& g, double rho) : g_(g), rho_(rho) {
    base_.assign(g.breakpoints().begin(), g.breakpoints().end());
    // g_0 changes sign at pi as well.
    base_.push_back(kPi);
  }

  double operator()(double a) const {
    std::vector<double> nodes = base_;
    for (double b : base_) nodes.push_back(b - a);
    const double integral = integrate_period(
        [this, a](double x) { return std::abs(g_.offset(x + a) * g_.offset(x)); }, nodes, 1e-8);
    return rho_ / kTwoPi * integral;
  }

 private:
  const MonotonePair& g_;
  double rho_;
  std::vector<double> base_;
};

struct LambdaSearch {
  double lambda = 1.0;
  double supremum = 1.0;
};

// Finds the smallest lambda with S(lambda) <= lambda where
// S(lambda) = max(A(eps*lambda), max_{a_j >= eps*lambda} A(a_j)).
LambdaSearch search_lambda(const OverlapIntegral& overlap, const std::map<double, double>& grid, double eps) {
  // Suffix maxima of A over the grid, keyed by grid point.
  std::vector<std::pair<double, double>> suffix(grid.begin(), grid.end());
  for (std::size_t i = suffix.size(); i-- > 1;) {
    suffix[i - 1].second = std::max(suffix[i - 1].second, suffix[i].second);
  }
  auto sup_at = [&](double lambda) {
    const double a0 = eps * lambda;
    auto it = std::lower_bound(suffix.begin(), suffix.end(), a0,
                               [](const auto& e, double v) { return e.first < v; });
    const double tail = it == suffix.end() ? 0.0 : it->second;
    return std::max(overlap(a0), tail);
  };

  double lo = 0.0;
  double hi = 1.0;
  for (int iter = 0; iter < 60 && hi - lo > 1e-12; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (sup_at(mid) <= mid) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return {hi, sup_at(hi)};
}

}  // namespace

double lambda_of(const MonotonePair& g, double rho, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("lambda_of: eps must lie in (0, 1]");
  const OverlapIntegral overlap(g, rho);

  // By symmetry A(a) = A(2pi - a), so the range [eps*l, 2pi - eps*l] reduces
  // to [eps*l, pi]. Uniform grid plus a geometric grid refined towards a = 0.
  constexpr double kGeomSpan = 16.0;  // smallest geometric point is pi*e^-16
  std::map<double, double> grid;
  auto fill = [&](std::size_t n) {
    for (std::size_t j = 1; j <= n; ++j) {
      const double uniform = kPi * static_cast<double>(j) / static_cast<double>(n);
      const double geometric = kPi * std::exp(-kGeomSpan * (1.0 - static_cast<double>(j) / static_cast<double>(n)));
      for (double a : {uniform, geometric}) {
        if (!grid.contains(a)) grid.emplace(a, overlap(a));
      }
    }
  };

  std::size_t n = 4096;
  fill(n);
  LambdaSearch previous = search_lambda(overlap, grid, eps);
  while (n < 65536) {
    n *= 2;
    fill(n);
    const LambdaSearch current = search_lambda(overlap, grid, eps);
    const bool settled = std::abs(current.supremum - previous.supremum) < 1e-4;
    previous = current;
    if (settled) break;
  }
  return std::min(previous.lambda, 1.0);
}

}  // namespace hl0

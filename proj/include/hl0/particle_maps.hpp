#pragma once

#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hl0 {

using Complex = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Raised when an argument lies outside the domain of a map or constructor.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class Family { Slit, Arc };
enum class MapDirection { G, F };
enum class Version { Plus, Minus };

std::string to_string(Family family);
Family family_from_string(const std::string& name);

/// A basic particle together with every scalar derived from it.
///
/// Slit particles are the segment (1, 1+delta]. Arc particles are the cap of
/// the disc |z-1| <= r|z+1| lying outside the unit circle, r = delta/(2-delta).
struct ParticleSpec {
  Family family = Family::Slit;
  double delta = 0.0;
  double t = 0.0;      // slit only
  double r = 0.0;      // arc only
  double gamma = 0.0;  // arc only
  double c = 0.0;      // logarithmic capacity
  double p = 0.0;      // half-width of the attachment interval on the circle
  double q = 0.0;      // half-width of the image interval
  double rho = 0.0;
  double delta_star = 0.0;
  std::optional<double> lambda1;  // localization constant at eps = 1

  /// Points with ||z| - 1| below this are treated as lying on the unit circle.
  static constexpr double kBoundaryTol = 1e-12;
};

struct BuildOptions {
  /// The localization constant needs a few thousand quadratures, so it is
  /// only computed on request.
  bool compute_lambda = false;
};

ParticleSpec build_particle(Family family, double delta, BuildOptions options = {});

/// Reduces a lift x to x = 2*pi*winding + angle with angle in (-pi, pi].
struct ReducedAngle {
  double winding = 0.0;
  double angle = 0.0;
};
ReducedAngle reduce_angle(double x);

/// Closed-form boundary maps of one particle, evaluated on reduced angles.
///
/// Cheap value type intended for the inner loops of the flows; the general
/// MonotonePair wraps it for quadrature and metric code.
class CircleMaps {
 public:
  explicit CircleMaps(const ParticleSpec& spec);

  /// g(d) or f(d) for d in (-pi, pi].
  double reduced(MapDirection dir, Version version, double d) const {
    return dir == MapDirection::G ? g_reduced(version, d) : f_reduced(version, d);
  }
  double g_reduced(Version version, double d) const;
  double f_reduced(Version version, double d) const;

  /// Rotated map x -> theta + h(x - theta) on lifts.
  double rotated(MapDirection dir, Version version, double theta, double x) const {
    const ReducedAngle red = reduce_angle(x - theta);
    return (theta + kTwoPi * red.winding) + reduced(dir, version, red.angle);
  }

  /// Lift of g^+ or f^+ (or the left-continuous versions) at theta.
  double lift(MapDirection dir, Version version, double theta) const {
    return rotated(dir, version, 0.0, theta);
  }

  /// Points in (-pi, pi] where h has a jump or a kink.
  std::vector<double> breakpoints(MapDirection dir) const;

  Family family() const { return family_; }
  double p() const { return p_; }
  double q() const { return q_; }

 private:
  double g_positive(double d) const;  // d in (p, pi]
  double f_positive(double d) const;  // d in [q, pi]

  Family family_;
  double t_ = 0.0;
  double r_ = 0.0;
  double p_ = 0.0;
  double q_ = 0.0;
};

/// Interior evaluation of F and G without domain checks, for composition loops.
class PlaneMaps {
 public:
  explicit PlaneMaps(const ParticleSpec& spec);

  /// F at a point strictly outside the closed unit disc.
  Complex F(Complex z) const;
  /// G at a point strictly outside the cluster element K.
  Complex G(Complex z) const;

  /// e^{i theta} F(e^{-i theta} z) given rot = e^{i theta}.
  Complex F_rotated(Complex rot, Complex z) const { return rot * F(std::conj(rot) * z); }
  Complex G_rotated(Complex rot, Complex z) const { return rot * G(std::conj(rot) * z); }

 private:
  Family family_;
  double t_ = 0.0;
  double r_ = 0.0;
  double gamma_ = 0.0;
};

/// A non-decreasing right-continuous map together with its left-continuous
/// modification. When periodic, x -> plus(x) - x has period 2*pi.
class MonotonePair {
 public:
  using Fn = std::function<double(double)>;

  /// A continuous map: minus coincides with plus.
  MonotonePair(Fn plus, bool periodic, std::vector<double> breakpoints = {});
  MonotonePair(Fn plus, Fn minus, bool periodic, std::vector<double> breakpoints = {});

  static MonotonePair identity(bool periodic = true);
  static MonotonePair from_particle(const ParticleSpec& spec, MapDirection dir);

  double plus(double x) const { return plus_(x); }
  double minus(double x) const { return minus_(x); }
  double operator()(Version v, double x) const { return v == Version::Plus ? plus_(x) : minus_(x); }
  /// The periodic displacement f_0 = f^+ - id.
  double offset(double x) const { return plus_(x) - x; }

  bool periodic() const { return periodic_; }
  /// Jump and kink locations; within (-pi, pi] in the periodic case.
  std::span<const double> breakpoints() const { return breakpoints_; }

 private:
  Fn plus_;
  Fn minus_;
  bool periodic_;
  std::vector<double> breakpoints_;
};

/// Normalized exterior map of the unit disc onto the complement of K0 u P.
/// Points within kBoundaryTol of the unit circle are treated as boundary
/// points, evaluated as limits from outside the disc.
Complex map_F(const ParticleSpec& spec, Complex z);

/// Inverse of map_F, defined outside K0 u P.
Complex map_G(const ParticleSpec& spec, Complex z);

/// True when z belongs to the particle P (closed disc excluded).
bool in_particle(const ParticleSpec& spec, Complex z);

/// True when z belongs to K = K0 u P, up to the boundary tolerance.
bool in_cluster_element(const ParticleSpec& spec, Complex z);

/// g^+(theta) or f^+(theta) as a lift.
double circle_map(const ParticleSpec& spec, MapDirection dir, double theta);

/// rho = 2*pi / integral of g_0^2 over one period.
double rho_of(const MonotonePair& g);

/// Integral of h over [-pi, pi] with the pair's breakpoints forced as nodes.
double integrate_period(const std::function<double(double)>& h, std::span<const double> breakpoints,
                        double rel_tol = 1e-10);

/// Smallest lambda in (0, 1] with
///   (rho/2pi) * int |g_0(x+a) g_0(x)| dx <= lambda  for a in [eps*lambda, 2pi - eps*lambda].
double lambda_of(const MonotonePair& g, double rho, double eps);

}  // namespace hl0

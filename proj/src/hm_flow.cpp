#include "hl0/hm_flow.hpp"

#include "merge_groups.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace hl0 {

std::string to_string(FlowDirection direction) {
  return direction == FlowDirection::Forward ? "forward" : "backward";
}

std::string to_string(Scaling scaling) {
  switch (scaling) {
    case Scaling::Long: return "long";
    case Scaling::Local: return "local";
    default: return "none";
  }
}

FlowDirection direction_from_string(const std::string& name) {
  if (name == "forward") return FlowDirection::Forward;
  if (name == "backward") return FlowDirection::Backward;
  throw DomainError("unknown flow direction '" + name + "' (expected forward or backward)");
}

Scaling scaling_from_string(const std::string& name) {
  if (name == "none") return Scaling::None;
  if (name == "long") return Scaling::Long;
  if (name == "local") return Scaling::Local;
  throw DomainError("unknown scaling '" + name + "' (expected none, long or local)");
}

// ---------------------------------------------------------------------------
// AngleFlow

AngleFlow::AngleFlow(const ParticleSpec& spec, std::span<const double> thetas)
    : spec_(spec), maps_(spec), thetas_(thetas) {}

double AngleFlow::apply(const FlowQuery& query, double x) const {
  if (query.m > query.n || query.n > size()) {
    throw DomainError("flow query needs 0 <= m <= n <= " + std::to_string(size()));
  }
  if (query.direction == FlowDirection::Forward) {
    for (std::size_t k = query.m + 1; k <= query.n; ++k) x = step(MapDirection::G, query.version, k, x);
  } else {
    for (std::size_t k = query.n; k > query.m; --k) x = step(MapDirection::F, query.version, k, x);
  }
  return x;
}

double flow_map(const ClusterState& cluster, const FlowQuery& query, double x) {
  return AngleFlow(cluster).apply(query, x);
}

// ---------------------------------------------------------------------------
// Interval embedding

std::optional<std::pair<long long, long long>> embed_interval(const Interval& interval, double rate) {
  if (!(rate > 0.0)) throw DomainError("embed_interval: rate must be positive");
  if (!(interval.lo <= interval.hi)) throw DomainError("embed_interval: empty interval");
  auto snap = [](double v) {
    const double r = std::round(v);
    return std::abs(v - r) <= 1e-9 * std::max(1.0, std::abs(v)) ? r : v;
  };
  const double lo = snap(rate * interval.lo);
  const double hi = snap(rate * interval.hi);
  const double first = interval.lo_closed ? std::ceil(lo) : std::floor(lo) + 1.0;
  const double last = interval.hi_closed ? std::floor(hi) : std::ceil(hi) - 1.0;
  if (first > last) return std::nullopt;
  return std::make_pair(static_cast<long long>(first), static_cast<long long>(last));
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

constexpr int kGridPerPeriod = 2048;

// Points at which the d_D constraints are tested on [a, b]: a uniform grid,
// the jumps of f, and the jumps of g shifted back by eps.
std::vector<double> test_points(const MonotonePair& f, const MonotonePair& g, double a, double b, double eps) {
  const double length = b - a;
  const auto count = static_cast<std::size_t>(std::ceil(kGridPerPeriod * std::max(1.0, length / kTwoPi)));
  std::vector<double> xs;
  xs.reserve(count + 64);
  for (std::size_t i = 0; i <= count; ++i) xs.push_back(a + length * static_cast<double>(i) / static_cast<double>(count));
  auto add_jumps = [&](const MonotonePair& h, double shift) {
    for (double jump : h.breakpoints()) {
      if (h.periodic()) {
        const double first = jump + kTwoPi * std::ceil((a + shift - jump) / kTwoPi);
        for (double y = first; y - shift <= b; y += kTwoPi) xs.push_back(y - shift);
      } else if (jump - shift >= a && jump - shift <= b) {
        xs.push_back(jump - shift);
      }
    }
  };
  add_jumps(f, 0.0);
  add_jumps(g, eps);
  return xs;
}

// True when f(x) <= g(x+eps) + eps and g(x) <= f(x+eps) + eps on the tested
// points, for both versions (the minus version covers left limits).
bool feasible(const MonotonePair& f, const MonotonePair& g, double a, double b, double eps) {
  constexpr double slack = 1e-14;
  for (const MonotonePair* pair : {&f, &g}) {
    const MonotonePair& u = *pair;
    const MonotonePair& v = pair == &f ? g : f;
    for (double x : test_points(u, v, a, b, eps)) {
      if (x > b || x < a) continue;
      for (Version ver : {Version::Plus, Version::Minus}) {
        const double lhs = u(ver, x);
        const double rhs = v(ver, x + eps) + eps;
        if (lhs > rhs + slack * (1.0 + std::abs(lhs))) return false;
      }
    }
  }
  return true;
}

double bisect_metric(const MonotonePair& f, const MonotonePair& g, double a, double b_at_zero, bool shrink,
                     double cap, double tol) {
  auto ok = [&](double eps) { return feasible(f, g, a, shrink ? b_at_zero - eps : b_at_zero, eps); };
  if (ok(0.0)) return 0.0;
  double hi = std::max(tol, 1e-3);
  while (!ok(hi)) {
    hi *= 2.0;
    if (hi > cap) return cap;
  }
  double lo = 0.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (ok(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace

namespace {

// V(u) = u - 2x with x the point where u = x + y crosses the completed graph.
class TurnedGraph {
 public:
  explicit TurnedGraph(const MonotonePair& f) : f_(f) {
    for (int i = 0; i < 256; ++i) {
      bound_ = std::max(bound_, std::abs(f.offset(-kPi + kTwoPi * i / 256.0)));
    }
    for (double b : f.breakpoints()) {
      bound_ = std::max({bound_, std::abs(f.plus(b) - b), std::abs(f.minus(b) - b)});
    }
    bound_ += 1.0;
  }

  double operator()(double u) const {
    double lo = 0.5 * (u - bound_);
    double hi = 0.5 * (u + bound_);
    while (true) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (mid + f_.plus(mid) < u) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return u - 2.0 * hi;
  }

  // Kinks of V within [u0, u0 + 4pi).
  void add_kinks(std::vector<double>& us, double u0) const {
    for (double b : f_.breakpoints()) {
      for (double y : {f_.minus(b), f_.plus(b)}) {
        const double u = b + y;
        us.push_back(u0 + std::fmod(std::fmod(u - u0, 2.0 * kTwoPi) + 2.0 * kTwoPi, 2.0 * kTwoPi));
      }
    }
  }

 private:
  const MonotonePair& f_;
  double bound_ = 0.0;
};

}  // namespace

double metric_dD(const MonotonePair& f, const MonotonePair& g, double tol) {
  if (!f.periodic() || !g.periodic()) throw DomainError("metric_dD: both maps must be periodic");
  const TurnedGraph vf(f);
  const TurnedGraph vg(g);
  auto gap = [&](double u) { return std::abs(vf(u) - vg(u)); };

  const double u0 = -kTwoPi;
  std::vector<double> us;
  for (int i = 0; i <= kGridPerPeriod; ++i) us.push_back(u0 + 2.0 * kTwoPi * i / kGridPerPeriod);
  vf.add_kinks(us, u0);
  vg.add_kinks(us, u0);
  std::sort(us.begin(), us.end());
  us.erase(std::unique(us.begin(), us.end()), us.end());
  std::vector<double> values(us.size());
  for (std::size_t i = 0; i < us.size(); ++i) values[i] = gap(us[i]);

  std::vector<std::size_t> order(us.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t top = std::min<std::size_t>(16, order.size());
  std::partial_sort(order.begin(), order.begin() + top, order.end(),
                    [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  double best = values[order[0]];
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  for (std::size_t t = 0; t < top; ++t) {
    const std::size_t i = order[t];
    for (auto [a, b] : {std::pair{i > 0 ? i - 1 : i, i}, std::pair{i, i + 1 < us.size() ? i + 1 : i}}) {
      double lo = us[a];
      double hi = us[b];
      if (hi - lo <= tol) continue;
      double x1 = hi - golden * (hi - lo);
      double x2 = lo + golden * (hi - lo);
      double g1 = gap(x1);
      double g2 = gap(x2);
      while (hi - lo > tol) {
        if (g1 >= g2) {
          hi = x2;
          x2 = x1;
          g2 = g1;
          x1 = hi - golden * (hi - lo);
          g1 = gap(x1);
        } else {
          lo = x1;
          x1 = x2;
          g1 = g2;
          x2 = lo + golden * (hi - lo);
          g2 = gap(x2);
        }
      }
      best = std::max({best, g1, g2});
    }
  }
  return 0.5 * best;
}

double metric_window(const MonotonePair& f, const MonotonePair& g, double half_width, double tol) {
  return bisect_metric(f, g, -half_width, half_width, true, 2.0 * half_width, tol);
}

double metric_dDbar(const MonotonePair& f, const MonotonePair& g, double tol) {
  double total = 0.0;
  double weight = 1.0;
  for (int n = 1; n <= 32; ++n) {
    weight *= 0.5;
    // Term n only needs accuracy tol / (32 * 2^-n).
    const double term_tol = std::min(0.25, tol / (32.0 * weight));
    total += weight * std::min(1.0, metric_window(f, g, n, term_tol));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Tracking

std::vector<FlowTrajectory> track_points(const AngleFlow& flow, std::span<const FlowStart> starts,
                                         FlowDirection direction, std::size_t upto, Scaling scaling) {
  if (starts.empty()) throw DomainError("track_points: no starting points");
  if (upto > flow.size()) throw DomainError("track_points: upto exceeds the number of angles");
  const bool forward = direction == FlowDirection::Forward;
  std::size_t lowest = starts[0].level;
  std::size_t highest = starts[0].level;
  for (const auto& s : starts) {
    if (forward ? s.level > upto : s.level < upto) {
      throw DomainError(forward ? "track_points: forward start above upto" : "track_points: backward start below upto");
    }
    lowest = std::min(lowest, s.level);
    highest = std::max(highest, s.level);
  }

  const ParticleSpec& spec = flow.spec();
  const double angle_scale = scaling == Scaling::Local ? 1.0 / std::sqrt(spec.delta_star) : 1.0;
  auto time_of = [&](std::size_t level) {
    const double k = forward ? static_cast<double>(level) : static_cast<double>(highest - level);
    switch (scaling) {
      case Scaling::Long: return k / spec.rho;
      case Scaling::Local: return spec.c * k;
      default: return k;
    }
  };

  const std::size_t count = starts.size();
  std::vector<FlowTrajectory> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].point_id = i;
    out[i].scaling = scaling;
  }
  MergeGroups tracker(count);
  std::vector<double> lift(count);
  std::vector<bool> active(count, false);
  std::vector<std::size_t> order;

  auto check_merges = [&](std::size_t level) {
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < count; ++i) {
      if (active[i] && tracker.root[i] == i) roots.push_back(i);
    }
    if (roots.size() < 2) return;
    std::vector<std::pair<double, std::size_t>> ring;
    ring.reserve(roots.size());
    for (std::size_t i : roots) ring.emplace_back(reduce_angle(lift[i]).angle, i);
    std::sort(ring.begin(), ring.end());
    // Neighbours in cyclic order, including the wrap-around pair.
    for (std::size_t j = 0; j < ring.size(); ++j) {
      const auto& [angle_a, a] = ring[j];
      const auto& [angle_b, b] = ring[(j + 1) % ring.size()];
      if (a == b) continue;
      const std::size_t ra = tracker.root[a];
      const std::size_t rb = tracker.root[b];
      if (ra == rb) continue;
      if (std::abs(reduce_angle(lift[ra] - lift[rb]).angle) <= 1e-12) {
        const std::size_t keep = std::min(ra, rb);
        tracker.merge(ra, rb, lift[ra], lift[rb]);
        for (std::size_t i : tracker.members[keep]) {
          if (!out[i].coalesced_step) out[i].coalesced_step = level;
        }
      }
    }
  };

  auto record = [&](std::size_t level) {
    for (std::size_t i = 0; i < count; ++i) {
      if (!active[i]) continue;
      const double x = lift[tracker.root[i]] + tracker.offset[i];
      out[i].steps.push_back(level);
      out[i].times.push_back(time_of(level));
      out[i].angles.push_back(x * angle_scale);
      out[i].coalesced_with.push_back(tracker.partner(i));
    }
  };

  auto activate = [&](std::size_t level) {
    for (std::size_t i = 0; i < count; ++i) {
      if (starts[i].level == level) {
        active[i] = true;
        lift[i] = starts[i].lift;
      }
    }
  };

  auto advance = [&](std::size_t k, MapDirection dir) {
    for (std::size_t i = 0; i < count; ++i) {
      if (active[i] && tracker.root[i] == i) lift[i] = flow.step(dir, Version::Plus, k, lift[i]);
    }
  };

  if (forward) {
    for (std::size_t level = lowest;; ++level) {
      activate(level);
      check_merges(level);
      record(level);
      if (level == upto) break;
      advance(level + 1, MapDirection::G);
    }
  } else {
    for (std::size_t level = highest;; --level) {
      activate(level);
      check_merges(level);
      record(level);
      if (level == upto) break;
      advance(level, MapDirection::F);
    }
  }
  return out;
}

std::vector<FlowTrajectory> track_points(const ClusterState& cluster, std::span<const FlowStart> starts,
                                         FlowDirection direction, std::size_t upto, Scaling scaling) {
  return track_points(AngleFlow(cluster), starts, direction, upto, scaling);
}

std::string trajectories_csv(const std::vector<FlowTrajectory>& trajectories) {
  std::string out = "step,time,point_id,lift,coalesced_with\n";
  for (const auto& tr : trajectories) {
    for (std::size_t r = 0; r < tr.steps.size(); ++r) {
      out += fmt::format("{},{},{},{},{}\n", tr.steps[r], tr.times[r], tr.point_id, tr.angles[r], tr.coalesced_with[r]);
    }
  }
  return out;
}

void write_trajectories_csv(const std::vector<FlowTrajectory>& trajectories, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << trajectories_csv(trajectories);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// PairBackwardFlow

PairBackwardFlow::PairBackwardFlow(const ParticleSpec& spec, double x, double y)
    : family_(spec.family),
      t_(spec.t),
      r_(spec.r),
      cos_q_(std::cos(spec.q)),
      scale_(spec.family == Family::Slit ? 1.0 / (1.0 - spec.t) : 0.0),
      u_(std::polar(1.0, x)),
      v_(std::polar(1.0, y)) {
  merged_ = std::abs(reduce_angle(x - y).angle) <= 1e-12;
}

// e^{i f(theta)} for w = e^{i theta} outside the flat interval.
Complex PairBackwardFlow::f_unit(Complex w) const {
  // Half-angle cosine k >= 0 and sine s, from whichever formula is stable.
  double k;
  double s;
  if (w.real() >= 0.0) {
    k = std::sqrt(0.5 * (1.0 + w.real()));
    s = w.imag() / (2.0 * k);
  } else {
    s = std::copysign(std::sqrt(0.5 * (1.0 - w.real())), w.imag());
    k = w.imag() / (2.0 * s);
  }
  if (family_ == Family::Slit) {
    const double sp = std::copysign(std::sqrt(std::max(0.0, s * s - t_)), s);
    const Complex h{k, sp};
    return h * h * scale_;
  }
  const double u = (1.0 - r_ * r_) * std::abs(s);
  const double a = 2.0 * k;
  const double b = u + std::sqrt(std::max(0.0, u * u - 4.0 * r_ * r_ * k * k));
  const Complex h{a, b};
  const Complex out = h * h / (a * a + b * b);
  return s < 0.0 ? std::conj(out) : out;
}

std::size_t PairBackwardFlow::advance(std::span<const double> thetas) {
  if (merged_) return 0;
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const Complex rot = std::polar(1.0, thetas[i]);
    const Complex a = u_ * std::conj(rot);
    const Complex b = v_ * std::conj(rot);
    const bool absorb_a = a.real() > cos_q_;
    const bool absorb_b = b.real() > cos_q_;
    if (absorb_a && absorb_b) {
      u_ = v_ = rot;
      merged_ = true;
      return i + 1;
    }
    u_ = absorb_a ? rot : rot * f_unit(a);
    v_ = absorb_b ? rot : rot * f_unit(b);
  }
  return 0;
}

}  // namespace hl0

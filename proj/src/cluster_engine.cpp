#include "hl0/cluster_engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "hl0/parallel.hpp"
#include "hl0/rng.hpp"

namespace hl0 {

namespace {

constexpr double kOuterSq = (1.0 + ParticleSpec::kBoundaryTol) * (1.0 + ParticleSpec::kBoundaryTol);

bool near_circle(Complex z) { return std::norm(z) <= kOuterSq; }

void require_level(const ClusterState& cluster, std::size_t k, const char* what) {
  if (k > cluster.n()) {
    throw DomainError(std::string(what) + ": level " + std::to_string(k) + " exceeds cluster size " +
                      std::to_string(cluster.n()));
  }
}

void require_particle(const ClusterState& cluster, std::size_t n, const char* what) {
  if (n < 1 || n > cluster.n()) {
    throw DomainError(std::string(what) + ": particle " + std::to_string(n) + " not in [1, " +
                      std::to_string(cluster.n()) + "]");
  }
}

// State of a point being pushed through F_k, ..., F_1.
//  - On the circle it is carried as a lift and moved by the circle maps
//    until some flat interval absorbs it onto a particle.
//  - Off the circle it is moved by the plane maps.
struct Trace {
  std::size_t level = 0;  // maps F_level..F_1 still to apply
  bool on_circle = false;
  double lift = 0.0;
  Complex point;
  std::size_t parent = 0;  // first particle absorbing the circle point
  double local_coord = 0.0;
  bool absorbed = false;
};

class Composer {
 public:
  explicit Composer(const ClusterState& cluster)
      : cluster_(cluster), plane_(cluster.spec), circle_(cluster.spec), q_(cluster.spec.q) {}

  // Moves along the circle until absorbed or level 0.
  void run_circle(Trace& tr) const {
    while (tr.level > 0) {
      const std::size_t j = tr.level;
      const double theta = cluster_.theta(j);
      const ReducedAngle red = reduce_angle(tr.lift - theta);
      if (std::abs(red.angle) < q_) {
        if (!tr.absorbed) {
          tr.absorbed = true;
          tr.parent = j;
          tr.local_coord = red.angle;
        }
        tr.point = cluster_.rotation(j) * map_F(cluster_.spec, std::polar(1.0, red.angle));
        tr.on_circle = false;
        tr.level = j - 1;
        return;
      }
      tr.lift = (theta + kTwoPi * red.winding) + circle_.f_reduced(Version::Plus, red.angle);
      tr.level = j - 1;
    }
    tr.point = std::polar(1.0, tr.lift);
  }

  // Moves through the plane maps; drops back to the circle if needed.
  void run_plane(Trace& tr) const {
    while (tr.level > 0) {
      if (near_circle(tr.point)) {
        enter_circle(tr);
        run_circle(tr);
        continue;
      }
      tr.point = plane_.F_rotated(cluster_.rotation(tr.level), tr.point);
      --tr.level;
    }
  }

  void run(Trace& tr) const {
    if (tr.on_circle) run_circle(tr);
    run_plane(tr);
  }

  static void enter_circle(Trace& tr) {
    tr.on_circle = true;
    tr.lift = std::arg(tr.point);
  }

  // Advances a batch of plane-mode traces together so that the independent
  // dependency chains overlap in the pipeline.
  template <std::size_t B>
  void run_plane_batch(std::array<Trace*, B>& batch, std::size_t count) const {
    std::size_t top = 0;
    for (std::size_t b = 0; b < count; ++b) top = std::max(top, batch[b]->level);
    std::array<Complex, B> z{};
    std::array<std::size_t, B> level{};
    std::array<bool, B> live{};
    for (std::size_t b = 0; b < count; ++b) {
      z[b] = batch[b]->point;
      level[b] = batch[b]->level;
      live[b] = true;
    }
    for (std::size_t j = top; j >= 1; --j) {
      const Complex rot = cluster_.rotation(j);
      for (std::size_t b = 0; b < count; ++b) {
        if (!live[b] || level[b] < j) continue;
        if (near_circle(z[b])) {
          live[b] = false;
          continue;
        }
        z[b] = plane_.F_rotated(rot, z[b]);
        level[b] = j - 1;
      }
    }
    for (std::size_t b = 0; b < count; ++b) {
      batch[b]->point = z[b];
      batch[b]->level = level[b];
      if (!live[b]) run_plane(*batch[b]);
    }
  }

 private:
  const ClusterState& cluster_;
  PlaneMaps plane_;
  CircleMaps circle_;
  double q_;
};

Trace start_trace(std::size_t k, Complex z) {
  Trace tr;
  tr.level = k;
  tr.point = z;
  if (near_circle(z)) Composer::enter_circle(tr);
  return tr;
}

Trace start_circle(std::size_t k, double lift) {
  Trace tr;
  tr.level = k;
  tr.on_circle = true;
  tr.lift = lift;
  return tr;
}

}  // namespace

std::vector<double> sample_thetas(std::size_t n, std::uint64_t seed) {
  std::vector<double> thetas(n);
  CounterRng rng(seed);
  for (auto& t : thetas) {
    t = kTwoPi * rng.uniform();
    if (t >= kTwoPi) t = 0.0;
  }
  return thetas;
}

ClusterState grow(const ParticleSpec& spec, std::size_t n, std::uint64_t seed, GrowOptions options) {
  return cluster_from_thetas(spec, sample_thetas(n, seed), seed, options);
}

ClusterState cluster_from_thetas(const ParticleSpec& spec, std::vector<double> thetas, std::uint64_t seed,
                                 GrowOptions options) {
  ClusterState cluster;
  cluster.spec = spec;
  cluster.seed = seed;
  cluster.thetas = std::move(thetas);
  const std::size_t n = cluster.n();
  cluster.rotations.resize(n);
  for (std::size_t k = 0; k < n; ++k) cluster.rotations[k] = std::polar(1.0, cluster.thetas[k]);
  cluster.records.resize(n);
  const std::size_t thin = std::max<std::size_t>(1, options.thin);

  const Composer composer(cluster);
  constexpr std::size_t kBatch = 8;
  const std::size_t batches = (n + kBatch - 1) / kBatch;
  parallel_for(batches, [&](std::size_t bi) {
    std::array<Trace, kBatch> traces;
    std::array<Trace*, kBatch> pending{};
    std::size_t count = 0;
    const std::size_t first = bi * kBatch + 1;
    const std::size_t last = std::min(n, first + kBatch - 1);
    for (std::size_t k = first; k <= last; ++k) {
      Trace& tr = traces[k - first];
      tr = start_circle(k - 1, cluster.theta(k));
      composer.run_circle(tr);
      ParticleRecord& rec = cluster.records[k - 1];
      rec.index = k;
      rec.theta = cluster.theta(k);
      rec.parent = tr.absorbed ? tr.parent : 0;
      rec.local_coord = tr.absorbed ? tr.local_coord : tr.lift;
      if (k % thin == 0 || thin == 1) pending[count++] = &tr;
    }
    composer.run_plane_batch(pending, count);
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t k = static_cast<std::size_t>(pending[b] - traces.data()) + first;
      cluster.records[k - 1].attach_point = pending[b]->point;
    }
  });
  return cluster;
}

Complex eval_phi(const ClusterState& cluster, std::size_t k, Complex z) {
  require_level(cluster, k, "eval_phi");
  if (!(std::norm(z) >= (1.0 - ParticleSpec::kBoundaryTol) * (1.0 - ParticleSpec::kBoundaryTol))) {
    throw DomainError("eval_phi: |z| < 1 lies inside the unit disc");
  }
  if (k == 0) return z;
  Trace tr = start_trace(k, z);
  Composer(cluster).run(tr);
  return tr.point;
}

GammaResult eval_gamma(const ClusterState& cluster, std::size_t k, Complex z) {
  require_level(cluster, k, "eval_gamma");
  if (near_circle(z)) return Swallowed{0};
  const PlaneMaps plane(cluster.spec);
  for (std::size_t j = 1; j <= k; ++j) {
    const Complex rot = cluster.rotation(j);
    const Complex u = std::conj(rot) * z;
    if (near_circle(u) || in_particle(cluster.spec, u)) return Swallowed{j};
    z = rot * plane.G(u);
  }
  return z;
}

ParentInfo parent_of(const ClusterState& cluster, std::size_t n) {
  require_particle(cluster, n, "parent_of");
  Trace tr = start_circle(n - 1, cluster.theta(n));
  Composer(cluster).run_circle(tr);
  if (tr.absorbed) return {tr.parent, tr.local_coord};
  return {0, tr.lift};
}

PlanarSet basic_boundary(const ParticleSpec& spec, std::size_t resolution) {
  if (resolution < 2) throw DomainError("particle boundary needs resolution >= 2");
  PlanarSet pts(resolution);
  const double last = static_cast<double>(resolution - 1);
  if (spec.family == Family::Slit) {
    for (std::size_t j = 0; j < resolution; ++j) {
      const double u = static_cast<double>(j) / last;
      pts[j] = 1.0 + spec.delta * (1.0 - std::abs(2.0 * u - 1.0));
    }
    return pts;
  }
  // Circle |w-1| = r|w+1|: centre C, radius R.
  const double r2 = spec.r * spec.r;
  const double centre = (1.0 + r2) / (1.0 - r2);
  const double radius = 2.0 * spec.r / (1.0 - r2);
  const double phi0 = std::arg(std::polar(1.0, spec.p) - centre);
  for (std::size_t j = 0; j < resolution; ++j) {
    const double phi = -phi0 + 2.0 * phi0 * static_cast<double>(j) / last;
    pts[j] = centre + std::polar(radius, phi);
  }
  pts.front() = std::polar(1.0, -spec.p);
  pts.back() = std::polar(1.0, spec.p);
  return pts;
}

namespace {

// Runs prepared traces to level 0, overlapping plane-mode chains in batches.
void run_traces(const ClusterState& cluster, std::vector<Trace>& traces) {
  const Composer composer(cluster);
  constexpr std::size_t kBatch = 8;
  const std::size_t batches = (traces.size() + kBatch - 1) / kBatch;
  parallel_for(batches, [&](std::size_t bi) {
    std::array<Trace*, kBatch> pending{};
    std::size_t count = 0;
    const std::size_t end = std::min(traces.size(), (bi + 1) * kBatch);
    for (std::size_t i = bi * kBatch; i < end; ++i) {
      if (traces[i].on_circle) composer.run_circle(traces[i]);
      pending[count++] = &traces[i];
    }
    composer.run_plane_batch(pending, count);
  });
}

}  // namespace

std::vector<PlanarSet> particle_boundaries(const ClusterState& cluster, std::span<const std::size_t> particles,
                                           std::size_t resolution) {
  for (std::size_t n : particles) require_particle(cluster, n, "particle_boundary");
  const PlanarSet basic = basic_boundary(cluster.spec, resolution);
  std::vector<Trace> traces;
  traces.reserve(particles.size() * resolution);
  for (std::size_t n : particles) {
    const Complex rot = cluster.rotation(n);
    for (const Complex& w : basic) {
      Trace tr = start_trace(n - 1, rot * w);
      // Rotating a point of the circle loses the exact angle; use Theta_n.
      if (tr.on_circle) tr.lift = cluster.theta(n) + std::arg(w);
      traces.push_back(tr);
    }
  }
  run_traces(cluster, traces);
  std::vector<PlanarSet> out(particles.size(), PlanarSet(resolution));
  for (std::size_t i = 0; i < particles.size(); ++i) {
    for (std::size_t j = 0; j < resolution; ++j) out[i][j] = traces[i * resolution + j].point;
  }
  return out;
}

PlanarSet particle_boundary(const ClusterState& cluster, std::size_t n, std::size_t resolution) {
  const std::size_t one[] = {n};
  return std::move(particle_boundaries(cluster, one, resolution).front());
}

std::vector<Complex> eval_phi_many(const ClusterState& cluster, std::span<const std::size_t> levels,
                                   std::span<const Complex> points) {
  if (levels.size() != points.size()) throw DomainError("eval_phi_many: size mismatch");
  std::vector<Trace> traces;
  traces.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    require_level(cluster, levels[i], "eval_phi");
    if (!(std::norm(points[i]) >= (1.0 - ParticleSpec::kBoundaryTol) * (1.0 - ParticleSpec::kBoundaryTol))) {
      throw DomainError("eval_phi: |z| < 1 lies inside the unit disc");
    }
    traces.push_back(start_trace(levels[i], points[i]));
  }
  run_traces(cluster, traces);
  std::vector<Complex> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = traces[i].point;
  return out;
}

nlohmann::json to_json(const ClusterState& cluster) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : cluster.records) {
    nlohmann::json r;
    r["index"] = rec.index;
    r["theta"] = rec.theta;
    if (rec.attach_point) {
      r["attach_re"] = rec.attach_point->real();
      r["attach_im"] = rec.attach_point->imag();
    } else {
      r["attach_re"] = nullptr;
      r["attach_im"] = nullptr;
    }
    r["parent"] = rec.parent;
    r["local_coord"] = rec.local_coord;
    records.push_back(std::move(r));
  }
  nlohmann::json doc;
  doc["family"] = to_string(cluster.spec.family);
  doc["delta"] = cluster.spec.delta;
  doc["seed"] = cluster.seed;
  doc["n"] = cluster.n();
  doc["thetas"] = cluster.thetas;
  doc["records"] = std::move(records);
  return doc;
}

ClusterState cluster_from_json(const nlohmann::json& doc) {
  ClusterState cluster;
  try {
    cluster.spec = build_particle(family_from_string(doc.at("family").get<std::string>()), doc.at("delta").get<double>());
    cluster.seed = doc.at("seed").get<std::uint64_t>();
    cluster.thetas = doc.at("thetas").get<std::vector<double>>();
    const auto n = doc.at("n").get<std::size_t>();
    if (n != cluster.thetas.size()) throw DomainError("cluster document: n does not match thetas");
    for (const auto& r : doc.at("records")) {
      ParticleRecord rec;
      rec.index = r.at("index").get<std::size_t>();
      rec.theta = r.at("theta").get<double>();
      if (!r.at("attach_re").is_null()) {
        rec.attach_point = Complex(r.at("attach_re").get<double>(), r.at("attach_im").get<double>());
      }
      rec.parent = r.at("parent").get<std::size_t>();
      rec.local_coord = r.at("local_coord").get<double>();
      cluster.records.push_back(rec);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed cluster document: ") + e.what());
  }
  if (cluster.records.size() != cluster.n()) throw DomainError("cluster document: records do not match n");
  cluster.rotations.resize(cluster.n());
  for (std::size_t k = 0; k < cluster.n(); ++k) cluster.rotations[k] = std::polar(1.0, cluster.thetas[k]);
  return cluster;
}

void save_cluster(const ClusterState& cluster, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << to_json(cluster).dump() << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

ClusterState load_cluster(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError("'" + path + "': " + e.what());
  }
  return cluster_from_json(doc);
}

}  // namespace hl0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hl0/particle_maps.hpp"

namespace hl0 {

/// Sampled points in the plane (or in logarithmic coordinates), in order.
using PlanarSet = std::vector<Complex>;

struct ParticleRecord {
  std::size_t index = 0;
  double theta = 0.0;
  /// Phi_{index-1}(e^{i theta}); empty when skipped by thinning.
  std::optional<Complex> attach_point;
  std::size_t parent = 0;
  /// Offset in (-q, q) on the parent, or the pulled-back lift when parent = 0.
  double local_coord = 0.0;
};

/// A grown cluster. Immutable once built.
struct ClusterState {
  ParticleSpec spec;
  std::uint64_t seed = 0;
  std::vector<double> thetas;         // Theta_1..Theta_n stored at 0..n-1
  std::vector<Complex> rotations;     // e^{i Theta_k}
  std::vector<ParticleRecord> records;

  std::size_t n() const { return thetas.size(); }
  double capacity() const { return spec.c * static_cast<double>(n()); }
  double theta(std::size_t k) const { return thetas[k - 1]; }
  Complex rotation(std::size_t k) const { return rotations[k - 1]; }
};

struct GrowOptions {
  /// Attachment points are only evaluated for every thin-th particle.
  std::size_t thin = 1;
};

/// The i.i.d. uniform angles on [0, 2pi) used by grow: Theta_k = 2pi * u_{k-1}
/// with u drawn from CounterRng(seed).
std::vector<double> sample_thetas(std::size_t n, std::uint64_t seed);

ClusterState grow(const ParticleSpec& spec, std::size_t n, std::uint64_t seed, GrowOptions options = {});

/// Builds a cluster from a prescribed angle sequence.
ClusterState cluster_from_thetas(const ParticleSpec& spec, std::vector<double> thetas, std::uint64_t seed = 0,
                                 GrowOptions options = {});

/// Phi_k(z). Points within the boundary tolerance of the unit circle are
/// evaluated as limits from outside.
Complex eval_phi(const ClusterState& cluster, std::size_t k, Complex z);

struct Swallowed {
  std::size_t step = 0;
  bool operator==(const Swallowed&) const = default;
};
using GammaResult = std::variant<Complex, Swallowed>;

/// Gamma_k(z) = G_k o ... o G_1 (z), or the first step at which z leaves the domain.
GammaResult eval_gamma(const ClusterState& cluster, std::size_t k, Complex z);

struct ParentInfo {
  std::size_t parent = 0;
  double local_coord = 0.0;
};

ParentInfo parent_of(const ClusterState& cluster, std::size_t n);

/// Phi_{n-1} applied to `resolution` samples of e^{i Theta_n} dP.
/// Slit: base -> tip -> base. Arc: the outer arc from e^{-ip} to e^{ip}.
PlanarSet particle_boundary(const ClusterState& cluster, std::size_t n, std::size_t resolution);

/// particle_boundary for several particles at once (same values, batched).
std::vector<PlanarSet> particle_boundaries(const ClusterState& cluster, std::span<const std::size_t> particles,
                                           std::size_t resolution);

/// Phi_{levels[i]}(points[i]) for many points at once.
std::vector<Complex> eval_phi_many(const ClusterState& cluster, std::span<const std::size_t> levels,
                                   std::span<const Complex> points);

/// Samples of dP itself, before rotation, in the order used above.
PlanarSet basic_boundary(const ParticleSpec& spec, std::size_t resolution);

nlohmann::json to_json(const ClusterState& cluster);
/// Rebuilds the spec from family and delta; records are taken as stored.
ClusterState cluster_from_json(const nlohmann::json& doc);

void save_cluster(const ClusterState& cluster, const std::string& path);
ClusterState load_cluster(const std::string& path);

}  // namespace hl0

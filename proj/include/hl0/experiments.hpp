#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hl0/cbf_reference.hpp"
#include "hl0/cluster_engine.hpp"
#include "hl0/fingers_gaps.hpp"
#include "hl0/hm_flow.hpp"

namespace hl0 {

enum class ExperimentKind { RadiusProfile, Coverage, StepVariance, CoalescenceKS, CapacityCheck, FlowVariance };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

/// Parsed experiment configuration. `params` keeps the driver-specific
/// settings; `thresholds` names every criterion the report must decide.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::CapacityCheck;
  Family family = Family::Slit;
  double delta = 0.1;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, double> thresholds;
  nlohmann::json params = nlohmann::json::object();
  std::string report_path;  // optional
  std::string csv_path;     // optional per-sample output

  static ExperimentConfig from_json(const nlohmann::json& doc);
  double param(const std::string& key, double fallback) const;
};

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::CapacityCheck;
  nlohmann::json inputs;
  std::map<std::string, double> statistics;
  std::map<std::string, bool> pass;
  std::map<std::string, double> thresholds;
  double runtime_seconds = 0.0;

  bool all_passed() const;
  nlohmann::json to_json() const;
  static ExperimentReport from_json(const nlohmann::json& doc);
};

/// Runs the configured driver. A failed criterion is reported, not thrown.
ExperimentReport run_experiment(const ExperimentConfig& config);

// Drivers' building blocks, exposed for tests.

/// |attach| e^{-c k} - 1 in absolute value, for every particle of a cluster.
std::vector<double> radial_deviations(const ClusterState& cluster);

/// Fraction of a polar grid of the disc |w| <= e^{cn} lying within
/// eps_hat e^{cn} of K_n, with K_n sampled by the unit disc and particle polylines.
double coverage_fraction(const ClusterState& cluster, double eps_hat, std::size_t angular, std::size_t radial,
                         std::size_t resolution);

/// Coalescence time of two points at lifts x < y under the backward flow of
/// i.i.d. angles drawn from rng, in steps; empty if beyond max_steps.
std::optional<std::size_t> backward_coalescence_steps(const ParticleSpec& spec, double x, double y,
                                                      std::size_t max_steps, CounterRng& rng);

/// Kolmogorov-Smirnov distance between the empirical law of samples
/// (std::nullopt = beyond the horizon) and cdf, over [0, horizon].
double censored_ks_distance(std::vector<std::optional<double>> samples, const std::function<double(double)>& cdf,
                            double horizon);

struct SvgOptions {
  std::size_t epochs = 5;
  bool log_coords = false;
  /// 0 picks 16 points per particle up to 2000 particles and 3 beyond.
  std::size_t resolution = 0;
  std::vector<FingerSet> fingers;
  std::vector<GapTrajectory> gaps;
};

std::string render_svg(const ClusterState& cluster, const SvgOptions& options = {});

/// Radius of the smallest origin-centred square view box of an SVG produced
/// by render_svg in plane coordinates.
double svg_view_radius(const std::string& svg);

class UnsupportedExport : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ExportFormat { CSV, JSON };

using Exportable = std::variant<ClusterState, std::vector<FlowTrajectory>, ExperimentReport>;

/// Writes the documented schema for the object. CSV is only defined for
/// trajectories; other combinations raise UnsupportedExport. I/O failures
/// raise std::runtime_error naming the path.
void export_data(const Exportable& object, const std::string& path, ExportFormat format);

}  // namespace hl0

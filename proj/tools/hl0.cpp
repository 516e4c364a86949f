#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "hl0/cbf_reference.hpp"
#include "hl0/cluster_engine.hpp"
#include "hl0/experiments.hpp"
#include "hl0/fingers_gaps.hpp"
#include "hl0/hm_flow.hpp"

using nlohmann::json;
using namespace hl0;

namespace {

constexpr int kUsageError = 2;
constexpr int kCriterionFailed = 1;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DomainError("'" + path + "': " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// Seeds in log coordinates: [[re, im], ...] or [{"re": .., "im": ..}, ...].
std::vector<Complex> read_seeds(const std::string& path) {
  const json doc = read_json(path);
  if (!doc.is_array()) throw DomainError("'" + path + "': expected an array of seeds");
  std::vector<Complex> seeds;
  for (const json& s : doc) {
    if (s.is_array() && s.size() == 2) {
      seeds.emplace_back(s[0].get<double>(), s[1].get<double>());
    } else if (s.is_object()) {
      seeds.emplace_back(s.at("re").get<double>(), s.at("im").get<double>());
    } else {
      throw DomainError("'" + path + "': each seed is [re, im] or {\"re\", \"im\"}");
    }
  }
  return seeds;
}

std::vector<FlowStart> read_flow_starts(const std::string& path) {
  const json doc = read_json(path);
  if (!doc.is_array()) throw DomainError("'" + path + "': expected an array of starts");
  std::vector<FlowStart> starts;
  for (const json& s : doc) {
    if (s.is_array() && s.size() == 2) {
      starts.push_back({s[0].get<std::size_t>(), s[1].get<double>()});
    } else {
      starts.push_back({s.at("level").get<std::size_t>(), s.at("lift").get<double>()});
    }
  }
  return starts;
}

std::vector<CbfStart> read_cbf_starts(const std::string& path) {
  const json doc = read_json(path);
  if (!doc.is_array()) throw DomainError("'" + path + "': expected an array of starts");
  std::vector<CbfStart> starts;
  for (const json& s : doc) {
    if (s.is_array() && s.size() == 2) {
      starts.push_back({s[0].get<double>(), s[1].get<double>()});
    } else {
      starts.push_back({s.value("time", 0.0), s.at("position").get<double>()});
    }
  }
  return starts;
}

ScaleKind scale_kind(const std::string& name) {
  if (name == "sigma") return ScaleKind::Sigma;
  if (name == "sigmabar") return ScaleKind::SigmaBar;
  throw DomainError("unknown scaling '" + name + "' (expected sigma or sigmabar)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HL(0) cluster growth, flows and experiments"};
  app.require_subcommand(1);

  // grow
  std::string family = "slit";
  double delta = 0.1;
  std::size_t n = 100;
  std::uint64_t seed = 1;
  std::size_t thin = 1;
  std::string out_path;
  auto* grow_cmd = app.add_subcommand("grow", "grow a cluster and save it as JSON");
  grow_cmd->add_option("--family", family, "slit or arc")->capture_default_str();
  grow_cmd->add_option("--delta", delta, "particle diameter")->capture_default_str();
  grow_cmd->add_option("--n", n, "number of particles")->capture_default_str();
  grow_cmd->add_option("--seed", seed, "RNG seed")->capture_default_str();
  grow_cmd->add_option("--thin", thin, "evaluate attachment points every k-th particle")->capture_default_str();
  grow_cmd->add_option("--out", out_path, "output cluster JSON")->required();

  // render
  std::string in_path;
  std::string svg_path;
  std::size_t epochs = 5;
  bool log_coords = false;
  std::size_t resolution = 0;
  std::string fingers_path;
  std::string gaps_path;
  std::string fingers_json;
  std::string gaps_json;
  std::string overlay_scaling = "sigma";
  auto* render_cmd = app.add_subcommand("render", "draw a cluster as SVG");
  render_cmd->add_option("--in", in_path, "cluster JSON")->required();
  render_cmd->add_option("--svg", svg_path, "output SVG")->required();
  render_cmd->add_option("--epochs", epochs, "number of colour buckets")->capture_default_str();
  render_cmd->add_flag("--log-coords", log_coords, "draw in logarithmic coordinates");
  render_cmd->add_option("--resolution", resolution, "points per particle (0 = automatic)");
  render_cmd->add_option("--fingers", fingers_path, "JSON seeds for finger overlays");
  render_cmd->add_option("--gaps", gaps_path, "JSON seeds for gap overlays");
  render_cmd->add_option("--fingers-json", fingers_json, "also export the fingers as JSON");
  render_cmd->add_option("--gaps-json", gaps_json, "also export the gaps as JSON");
  render_cmd->add_option("--scaling", overlay_scaling, "sigma or sigmabar for the JSON exports")->capture_default_str();

  // flow
  std::string track_path;
  std::string direction = "forward";
  std::string scaling = "none";
  long long upto = -1;
  auto* flow_cmd = app.add_subcommand("flow", "track boundary points under the harmonic measure flow");
  flow_cmd->add_option("--in", in_path, "cluster JSON")->required();
  flow_cmd->add_option("--track", track_path, "JSON starts [[level, lift], ...]")->required();
  flow_cmd->add_option("--direction", direction, "forward or backward")->capture_default_str();
  flow_cmd->add_option("--scaling", scaling, "none, long or local")->capture_default_str();
  flow_cmd->add_option("--upto", upto, "final level (default n forward, 0 backward)");
  flow_cmd->add_option("--out", out_path, "output CSV")->required();

  // cbf
  std::string domain = "line";
  std::string starts_path;
  double horizon = 1.0;
  double dt = 1e-3;
  std::size_t runs = 1;
  bool no_bridge = false;
  std::size_t record_every = 1;
  std::string collisions_path;
  auto* cbf_cmd = app.add_subcommand("cbf", "sample coalescing Brownian motions");
  cbf_cmd->add_option("--domain", domain, "line or circle")->capture_default_str();
  cbf_cmd->add_option("--starts", starts_path, "JSON starts [[time, position], ...]")->required();
  cbf_cmd->add_option("--horizon", horizon, "final time")->capture_default_str();
  cbf_cmd->add_option("--dt", dt, "time step")->capture_default_str();
  cbf_cmd->add_option("--runs", runs, "independent replicas")->capture_default_str();
  cbf_cmd->add_option("--seed", seed, "RNG seed")->capture_default_str();
  cbf_cmd->add_flag("--no-bridge", no_bridge, "disable the Brownian bridge correction");
  cbf_cmd->add_option("--record-every", record_every, "keep every k-th grid row")->capture_default_str();
  cbf_cmd->add_option("--out", out_path, "trajectories CSV of the first replica")->required();
  cbf_cmd->add_option("--collisions", collisions_path, "per-replica coalescence CSV");

  // experiment
  std::string config_path;
  std::string report_path;
  auto* exp_cmd = app.add_subcommand("experiment", "run an experiment driver");
  exp_cmd->add_option("--config", config_path, "experiment JSON")->required();
  exp_cmd->add_option("--report", report_path, "report JSON (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*grow_cmd) {
      const ParticleSpec spec = build_particle(family_from_string(family), delta);
      const ClusterState cluster = grow(spec, n, seed, GrowOptions{thin == 0 ? 1 : thin});
      save_cluster(cluster, out_path);
      fmt::print("grew {} particles, capacity {}\n", cluster.n(), cluster.capacity());
      return 0;
    }
    if (*render_cmd) {
      const ClusterState cluster = load_cluster(in_path);
      SvgOptions options;
      options.epochs = epochs;
      options.log_coords = log_coords;
      options.resolution = resolution;
      const ScaleKind kind = scale_kind(overlay_scaling);
      if (!fingers_path.empty()) {
        const FingerFinder finder(cluster);
        json exported = json::array();
        for (const Complex& z : read_seeds(fingers_path)) {
          options.fingers.push_back(finder.finger_of(z));
          exported.push_back(to_json(options.fingers.back(), cluster.spec, kind));
        }
        if (!fingers_json.empty()) write_text(fingers_json, exported.dump(2) + "\n");
      }
      if (!gaps_path.empty()) {
        json exported = json::array();
        for (const Complex& z : read_seeds(gaps_path)) {
          options.gaps.push_back(gap_proxy_of(cluster, z, cluster.n()));
          exported.push_back(to_json(options.gaps.back(), cluster.spec, kind));
        }
        if (!gaps_json.empty()) write_text(gaps_json, exported.dump(2) + "\n");
      }
      write_text(svg_path, render_svg(cluster, options));
      return 0;
    }
    if (*flow_cmd) {
      const ClusterState cluster = load_cluster(in_path);
      const FlowDirection dir = direction_from_string(direction);
      const std::size_t last =
          upto >= 0 ? static_cast<std::size_t>(upto) : (dir == FlowDirection::Forward ? cluster.n() : 0);
      const auto starts = read_flow_starts(track_path);
      const auto trajectories = track_points(cluster, starts, dir, last, scaling_from_string(scaling));
      export_data(trajectories, out_path, ExportFormat::CSV);
      return 0;
    }
    if (*cbf_cmd) {
      CbfConfig config;
      config.domain = cbf_domain_from_string(domain);
      config.starts = read_cbf_starts(starts_path);
      config.horizon = horizon;
      config.dt = dt;
      config.bridge_correction = !no_bridge;
      config.record_every = record_every;
      if (runs == 0) throw DomainError("--runs must be at least 1");
      std::string collisions = "run,point_id,coalesced_with,time\n";
      std::size_t coalesced = 0;
      for (std::size_t run = 0; run < runs; ++run) {
        config.seed = derive_seed(seed, run);
        const auto trajectories = simulate_cbf(config);
        if (run == 0) export_data(trajectories, out_path, ExportFormat::CSV);
        for (const auto& tr : trajectories) {
          if (!tr.coalesced_step) continue;
          ++coalesced;
          if (!collisions_path.empty()) {
            const double time = tr.times.front() - dt * static_cast<double>(tr.steps.front()) +
                                dt * static_cast<double>(*tr.coalesced_step);
            collisions += fmt::format("{},{},{},{}\n", run, tr.point_id, tr.coalesced_with.back(), time);
          }
        }
      }
      if (!collisions_path.empty()) write_text(collisions_path, collisions);
      fmt::print("{} runs, {} coalesced points\n", runs, coalesced);
      return 0;
    }
    if (*exp_cmd) {
      ExperimentConfig config = ExperimentConfig::from_json(read_json(config_path));
      if (!report_path.empty()) config.report_path = report_path;
      const ExperimentReport report = run_experiment(config);
      for (const auto& [name, ok] : report.pass) {
        fmt::print("{} {} (statistic {}, threshold {})\n", ok ? "PASS" : "FAIL", name,
                   report.statistics.count(name) ? report.statistics.at(name) : std::nan(""),
                   report.thresholds.at(name));
      }
      return report.all_passed() ? 0 : kCriterionFailed;
    }
  } catch (const std::exception& e) {
    std::cerr << "hl0: " << e.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}

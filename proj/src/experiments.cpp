#include "hl0/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <fmt/format.h>

#include "hl0/parallel.hpp"

namespace hl0 {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

using nlohmann::json;

namespace {

const std::vector<std::pair<ExperimentKind, std::string>> kKindNames = {
    {ExperimentKind::RadiusProfile, "RadiusProfile"}, {ExperimentKind::Coverage, "Coverage"},
    {ExperimentKind::StepVariance, "StepVariance"},   {ExperimentKind::CoalescenceKS, "CoalescenceKS"},
    {ExperimentKind::CapacityCheck, "CapacityCheck"}, {ExperimentKind::FlowVariance, "FlowVariance"},
};

// Criteria each driver decides. A config must give a threshold for each.
std::vector<std::string> criteria_of(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::RadiusProfile: return {"median_deviation", "comparison_ratio"};
    case ExperimentKind::Coverage: return {"coverage_fraction"};
    case ExperimentKind::StepVariance: return {"mean_se", "mean_square_se"};
    case ExperimentKind::CoalescenceKS: return {"ks"};
    case ExperimentKind::CapacityCheck: return {"max_abs_error"};
    case ExperimentKind::FlowVariance: return {"variance_se"};
  }
  return {};
}

struct Moments {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
};

Moments moments_of(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) throw DomainError("median of an empty sample");
  const std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
  const double upper = xs[mid];
  if (xs.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid)));
}

double formal_epsilon(double delta) { return std::pow(delta, 2.0 / 3.0) * std::pow(std::log(1.0 / delta), 8.0); }

std::size_t as_count(const ExperimentConfig& config, const std::string& key, double fallback) {
  const double v = config.param(key, fallback);
  if (!(v >= 0.0) || v != std::floor(v)) throw DomainError("parameter '" + key + "' must be a non-negative integer");
  return static_cast<std::size_t>(v);
}

class CsvSink {
 public:
  explicit CsvSink(const std::string& path) : path_(path) {
    if (!path_.empty()) text_ = "series,seed,index,value\n";
  }
  void add(const std::string& series, std::uint64_t seed, std::size_t index, double value) {
    if (!path_.empty()) text_ += fmt::format("{},{},{},{}\n", series, seed, index, value);
  }
  void flush() const {
    if (path_.empty()) return;
    std::ofstream out(path_);
    if (!out) throw std::runtime_error("cannot open '" + path_ + "' for writing");
    out << text_;
  }

 private:
  std::string path_;
  std::string text_;
};

// ---------------------------------------------------------------------------
// Drivers

void run_capacity(const ExperimentConfig& config, ExperimentReport& report, CsvSink& csv) {
  const ParticleSpec spec = build_particle(config.family, config.delta);
  const std::size_t n = as_count(config, "n", 1000);
  const double radius = config.param("radius", 1e8);
  // No attachment points are needed, only the angles.
  const GrowOptions opts{n + 1};
  double worst = 0.0;
  for (std::uint64_t seed : config.seeds) {
    const ClusterState cluster = grow(spec, n, seed, opts);
    double err = 0.0;
    for (double arg : {0.0, 1.0, 2.0, 3.0}) {
      const Complex z = std::polar(radius, arg);
      const double estimate = std::log(std::abs(eval_phi(cluster, n, z))) - std::log(radius);
      err = std::max(err, std::abs(estimate - cluster.capacity()));
    }
    csv.add("abs_error", seed, n, err);
    worst = std::max(worst, err);
  }
  report.statistics["capacity"] = spec.c * static_cast<double>(n);
  report.statistics["max_abs_error"] = worst;
  report.pass["max_abs_error"] = worst <= report.thresholds.at("max_abs_error");
}

void run_step_variance(const ExperimentConfig& config, ExperimentReport& report, CsvSink& csv) {
  const ParticleSpec spec = build_particle(config.family, config.delta);
  const CircleMaps maps(spec);
  const std::size_t samples = as_count(config, "samples", 100000);
  std::vector<double> steps;
  std::vector<double> squares;
  for (std::uint64_t seed : config.seeds) {
    CounterRng rng(seed);
    for (std::size_t i = 0; i < samples; ++i) {
      // One forward step from a uniform point: its displacement is g_0(x - Theta).
      const double x = kTwoPi * rng.uniform();
      const double theta = kTwoPi * rng.uniform();
      const double step = maps.rotated(MapDirection::G, Version::Plus, theta, x) - x;
      steps.push_back(step);
      squares.push_back(step * step);
    }
  }
  const Moments m1 = moments_of(steps);
  const Moments m2 = moments_of(squares);
  csv.add("mean", 0, 0, m1.mean);
  csv.add("mean_square", 0, 0, m2.mean);
  report.statistics["mean"] = m1.mean;
  report.statistics["mean_stderr"] = m1.se;
  report.statistics["mean_square"] = m2.mean;
  report.statistics["mean_square_stderr"] = m2.se;
  report.statistics["inverse_rho"] = 1.0 / spec.rho;
  // Criterion statistics are distances in standard errors.
  report.statistics["mean_se"] = std::abs(m1.mean) / m1.se;
  report.statistics["mean_square_se"] = std::abs(m2.mean - 1.0 / spec.rho) / m2.se;
  report.pass["mean_se"] = report.statistics["mean_se"] <= report.thresholds.at("mean_se");
  report.pass["mean_square_se"] = report.statistics["mean_square_se"] <= report.thresholds.at("mean_square_se");
}

void run_flow_variance(const ExperimentConfig& config, ExperimentReport& report, CsvSink& csv) {
  const ParticleSpec spec = build_particle(config.family, config.delta);
  const CircleMaps maps(spec);
  const std::size_t steps = as_count(config, "steps", 100);
  const std::size_t runs = as_count(config, "runs", 10000);
  if (steps < 2 || runs < 2) throw DomainError("FlowVariance needs steps >= 2 and runs >= 2");
  std::vector<double> displacement;
  // Lag-one products of centred increments, for the independence check.
  std::vector<double> lag_products;
  for (std::uint64_t seed : config.seeds) {
    for (std::size_t run = 0; run < runs; ++run) {
      CounterRng rng(derive_seed(seed, run));
      const double x0 = kTwoPi * rng.uniform();
      double x = x0;
      double previous = 0.0;
      for (std::size_t k = 1; k <= steps; ++k) {
        const double next = maps.rotated(MapDirection::G, Version::Plus, kTwoPi * rng.uniform(), x);
        const double inc = next - x;
        if (k == steps / 2 + 1) lag_products.push_back(previous * inc * spec.rho);
        previous = inc;
        x = next;
      }
      displacement.push_back(x - x0);
      csv.add("displacement", seed, run, x - x0);
    }
  }
  const double count = static_cast<double>(displacement.size());
  const double mean = std::accumulate(displacement.begin(), displacement.end(), 0.0) / count;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double d : displacement) {
    m2 += (d - mean) * (d - mean);
    m4 += std::pow(d - mean, 4);
  }
  m2 /= count;
  m4 /= count;
  const double variance = m2 * count / (count - 1.0);
  const double se = std::sqrt(std::max(0.0, m4 - m2 * m2) / count);
  const double expected = static_cast<double>(steps) / spec.rho;
  const Moments lag = moments_of(lag_products);
  report.statistics["variance"] = variance;
  report.statistics["variance_stderr"] = se;
  report.statistics["expected_variance"] = expected;
  report.statistics["lag1_correlation"] = lag.mean;
  report.statistics["variance_se"] = std::abs(variance - expected) / se;
  report.statistics["autocorrelation_se"] = std::abs(lag.mean) / lag.se;
  report.pass["variance_se"] = report.statistics["variance_se"] <= report.thresholds.at("variance_se");
  if (report.thresholds.count("autocorrelation_se") != 0) {
    report.pass["autocorrelation_se"] =
        report.statistics["autocorrelation_se"] <= report.thresholds.at("autocorrelation_se");
  }
}

void run_coalescence(const ExperimentConfig& config, ExperimentReport& report, CsvSink& csv) {
  const ParticleSpec spec = build_particle(config.family, config.delta);
  const std::size_t runs = as_count(config, "runs", 2000);
  const double horizon = config.param("horizon", 1.0);
  if (!(horizon > 0.0)) throw DomainError("CoalescenceKS needs a positive horizon");
  const Scaling scaling = scaling_from_string(config.params.value("scaling", std::string("long")));
  if (scaling == Scaling::None) throw DomainError("CoalescenceKS needs long or local scaling");
  std::vector<double> distances = {kPi / 8.0, kPi / 4.0, kPi / 2.0};
  if (config.params.contains("distances")) distances = config.params.at("distances").get<std::vector<double>>();

  const bool local = scaling == Scaling::Local;
  // Long: time k/rho against the circle law. Local: time c*k, angles over sqrt(delta*), line law.
  const double step_time = local ? spec.c : 1.0 / spec.rho;
  const double angle_scale = local ? std::sqrt(spec.delta_star) : 1.0;
  const auto max_steps = static_cast<std::size_t>(std::floor(horizon / step_time));
  const CbfDomain domain = local ? CbfDomain::Line : CbfDomain::Circle;

  double worst = 0.0;
  for (std::size_t di = 0; di < distances.size(); ++di) {
    const double d = distances[di];
    if (!(d > 0.0) || (!local && d >= kTwoPi)) throw DomainError("CoalescenceKS: distance out of range");
    std::vector<std::optional<double>> samples(runs * config.seeds.size());
    parallel_for(samples.size(), [&](std::size_t i) {
      const std::uint64_t seed = config.seeds[i / runs];
      CounterRng rng(derive_seed(derive_seed(seed, di), i % runs));
      const double x = kTwoPi * rng.uniform();
      const auto steps = backward_coalescence_steps(spec, x, x + d * angle_scale, max_steps, rng);
      if (steps) samples[i] = static_cast<double>(*steps) * step_time;
    });
    for (std::size_t i = 0; i < samples.size(); ++i) {
      csv.add(fmt::format("time_d{}", di), config.seeds[i / runs], i % runs,
              samples[i] ? *samples[i] : std::numeric_limits<double>::infinity());
    }
    const double ks = censored_ks_distance(samples, [&](double t) { return pair_collision_cdf(domain, d, t); }, horizon);
    const auto merged = std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.has_value(); });
    report.statistics[fmt::format("ks_d{}", di)] = ks;
    report.statistics[fmt::format("distance_d{}", di)] = d;
    report.statistics[fmt::format("coalesced_fraction_d{}", di)] =
        static_cast<double>(merged) / static_cast<double>(samples.size());
    report.statistics[fmt::format("reference_fraction_d{}", di)] = pair_collision_cdf(domain, d, horizon);
    worst = std::max(worst, ks);
  }
  report.statistics["ks"] = worst;
  report.pass["ks"] = worst <= report.thresholds.at("ks");
}

double median_radial_deviation(const ParticleSpec& spec, std::size_t n, const std::vector<std::uint64_t>& seeds,
                               CsvSink* csv) {
  std::vector<double> all;
  for (std::uint64_t seed : seeds) {
    const ClusterState cluster = grow(spec, n, seed);
    const std::vector<double> dev = radial_deviations(cluster);
    if (csv) {
      for (std::size_t k = 0; k < dev.size(); ++k) csv->add("deviation", seed, k + 1, dev[k]);
    }
    all.insert(all.end(), dev.begin(), dev.end());
  }
  return median_of(std::move(all));
}

void run_radius(const ExperimentConfig& config, ExperimentReport& report, CsvSink& csv) {
  const ParticleSpec spec = build_particle(config.family, config.delta);
  const std::size_t n = as_count(config, "n", 20000);
  if (n == 0) throw DomainError("RadiusProfile needs n >= 1");
  const double median = median_radial_deviation(spec, n, config.seeds, &csv);

  const json compare = config.params.value("compare", json::object());
  const double cmp_delta = compare.value("delta", 0.1);
  const auto cmp_n = compare.value("n", std::size_t{800});
  const auto cmp_seeds = compare.value("seeds", config.seeds);
  if (cmp_seeds.empty()) throw DomainError("RadiusProfile comparison needs seeds");
  const ParticleSpec cmp_spec = build_particle(config.family, cmp_delta);
  const double cmp_median = median_radial_deviation(cmp_spec, cmp_n, cmp_seeds, nullptr);

  report.statistics["median_deviation"] = median;
  report.statistics["comparison_median_deviation"] = cmp_median;
  report.statistics["comparison_ratio"] = median / cmp_median;
  report.statistics["formal_epsilon"] = formal_epsilon(config.delta);
  report.statistics["comparison_formal_epsilon"] = formal_epsilon(cmp_delta);
  report.inputs["compare"] = {{"delta", cmp_delta}, {"n", cmp_n}, {"seeds", cmp_seeds}};
  report.pass["median_deviation"] = median <= report.thresholds.at("median_deviation");
  // A ratio threshold of 1 demands a strictly smaller median.
  report.pass["comparison_ratio"] = median / cmp_median < report.thresholds.at("comparison_ratio");
}

void run_coverage(const ExperimentConfig& config, ExperimentReport& report, CsvSink& csv) {
  const ParticleSpec spec = build_particle(config.family, config.delta);
  const std::size_t n = as_count(config, "n", 3000);
  const double eps_hat = config.param("eps_hat", 0.2);
  const std::size_t angular = as_count(config, "angular", 256);
  const std::size_t radial = as_count(config, "radial", 64);
  const std::size_t resolution = as_count(config, "resolution", 32);
  if (angular == 0 || radial == 0 || resolution < 2) throw DomainError("Coverage: grid sizes must be positive");
  double worst = 1.0;
  double total = 0.0;
  for (std::uint64_t seed : config.seeds) {
    const ClusterState cluster = grow(spec, n, seed, GrowOptions{n + 1});
    const double fraction = coverage_fraction(cluster, eps_hat, angular, radial, resolution);
    csv.add("coverage", seed, n, fraction);
    worst = std::min(worst, fraction);
    total += fraction;
  }
  report.statistics["coverage_fraction"] = worst;
  report.statistics["mean_coverage_fraction"] = total / static_cast<double>(config.seeds.size());
  report.statistics["formal_epsilon"] = formal_epsilon(config.delta);
  report.pass["coverage_fraction"] = worst >= report.thresholds.at("coverage_fraction");
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw DomainError("unknown experiment kind '" + name + "'");
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw DomainError("experiment config must be a JSON object");
  ExperimentConfig config;
  try {
    config.kind = experiment_kind_from_string(doc.at("kind").get<std::string>());
    config.family = family_from_string(doc.value("family", std::string("slit")));
    config.delta = doc.at("delta").get<double>();
    config.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    config.thresholds = doc.at("thresholds").get<std::map<std::string, double>>();
    config.report_path = doc.value("report", std::string());
    config.csv_path = doc.value("csv", std::string());
  } catch (const json::exception& e) {
    throw DomainError(std::string("experiment config: ") + e.what());
  }
  if (config.seeds.empty()) throw DomainError("experiment config: seeds must be nonempty");
  for (const auto& [name, value] : config.thresholds) {
    if (!(value > 0.0)) throw DomainError("experiment config: threshold '" + name + "' must be positive");
  }
  for (const std::string& name : criteria_of(config.kind)) {
    if (config.thresholds.count(name) == 0) throw DomainError("experiment config: missing threshold '" + name + "'");
  }
  for (const auto& [key, value] : doc.items()) {
    if (key != "kind" && key != "family" && key != "delta" && key != "seeds" && key != "thresholds" &&
        key != "report" && key != "csv") {
      config.params[key] = value;
    }
  }
  return config;
}

double ExperimentConfig::param(const std::string& key, double fallback) const {
  if (!params.contains(key)) return fallback;
  const json& v = params.at(key);
  if (!v.is_number()) throw DomainError("parameter '" + key + "' must be a number");
  return v.get<double>();
}

bool ExperimentReport::all_passed() const {
  return std::all_of(pass.begin(), pass.end(), [](const auto& kv) { return kv.second; });
}

json ExperimentReport::to_json() const {
  return {{"kind", to_string(kind)},       {"inputs", inputs},   {"statistics", statistics},
          {"thresholds", thresholds},      {"pass", pass},       {"passed", all_passed()},
          {"runtime_seconds", runtime_seconds}};
}

ExperimentReport ExperimentReport::from_json(const json& doc) {
  ExperimentReport report;
  try {
    report.kind = experiment_kind_from_string(doc.at("kind").get<std::string>());
    report.inputs = doc.at("inputs");
    report.statistics = doc.at("statistics").get<std::map<std::string, double>>();
    report.thresholds = doc.at("thresholds").get<std::map<std::string, double>>();
    report.pass = doc.at("pass").get<std::map<std::string, bool>>();
    report.runtime_seconds = doc.at("runtime_seconds").get<double>();
  } catch (const json::exception& e) {
    throw DomainError(std::string("experiment report: ") + e.what());
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  if (config.seeds.empty()) throw DomainError("experiment needs at least one seed");
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.kind = config.kind;
  report.thresholds = config.thresholds;
  report.inputs = config.params;
  report.inputs["kind"] = to_string(config.kind);
  report.inputs["family"] = to_string(config.family);
  report.inputs["delta"] = config.delta;
  report.inputs["seeds"] = config.seeds;
  CsvSink csv(config.csv_path);
  switch (config.kind) {
    case ExperimentKind::CapacityCheck: run_capacity(config, report, csv); break;
    case ExperimentKind::StepVariance: run_step_variance(config, report, csv); break;
    case ExperimentKind::FlowVariance: run_flow_variance(config, report, csv); break;
    case ExperimentKind::CoalescenceKS: run_coalescence(config, report, csv); break;
    case ExperimentKind::RadiusProfile: run_radius(config, report, csv); break;
    case ExperimentKind::Coverage: run_coverage(config, report, csv); break;
  }
  // Criteria without a statistic of their own stay visible as failures.
  for (const auto& [name, value] : config.thresholds) {
    if (report.pass.count(name) == 0) report.pass[name] = false;
  }
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  csv.flush();
  if (!config.report_path.empty()) export_data(report, config.report_path, ExportFormat::JSON);
  return report;
}

// ---------------------------------------------------------------------------
// Building blocks

std::vector<double> radial_deviations(const ClusterState& cluster) {
  std::vector<double> out;
  out.reserve(cluster.n());
  for (const auto& rec : cluster.records) {
    if (!rec.attach_point) continue;
    const double level = static_cast<double>(rec.index - 1);
    out.push_back(std::abs(std::abs(*rec.attach_point) * std::exp(-cluster.spec.c * level) - 1.0));
  }
  return out;
}

double coverage_fraction(const ClusterState& cluster, double eps_hat, std::size_t angular, std::size_t radial,
                         std::size_t resolution) {
  using Point = bg::model::d2::point_xy<double>;
  const double radius = std::exp(cluster.capacity());
  const double reach = eps_hat * radius;
  std::vector<std::size_t> all(cluster.n());
  std::iota(all.begin(), all.end(), std::size_t{1});
  std::vector<Point> pts;
  for (const PlanarSet& line : particle_boundaries(cluster, all, resolution)) {
    for (const Complex& p : line) pts.emplace_back(p.real(), p.imag());
  }
  const bgi::rtree<Point, bgi::rstar<16>> tree(pts.begin(), pts.end());
  std::size_t covered = 0;
  for (std::size_t i = 0; i < radial; ++i) {
    const double r = radius * static_cast<double>(i + 1) / static_cast<double>(radial);
    for (std::size_t j = 0; j < angular; ++j) {
      const Complex w = std::polar(r, kTwoPi * static_cast<double>(j) / static_cast<double>(angular));
      double dist = std::max(0.0, r - 1.0);
      if (dist > reach && !pts.empty()) {
        const Point query(w.real(), w.imag());
        for (auto it = tree.qbegin(bgi::nearest(query, 1)); it != tree.qend(); ++it) {
          dist = std::min(dist, std::hypot(it->x() - w.real(), it->y() - w.imag()));
        }
      }
      if (dist <= reach) ++covered;
    }
  }
  return static_cast<double>(covered) / static_cast<double>(angular * radial);
}

std::optional<std::size_t> backward_coalescence_steps(const ParticleSpec& spec, double x, double y,
                                                      std::size_t max_steps, CounterRng& rng) {
  PairBackwardFlow pair(spec, x, y);
  if (pair.merged()) return 0;
  constexpr std::size_t kChunk = 4096;
  std::vector<double> thetas;
  for (std::size_t done = 0; done < max_steps; done += kChunk) {
    thetas.resize(std::min(kChunk, max_steps - done));
    for (double& t : thetas) t = kTwoPi * rng.uniform();
    const std::size_t at = pair.advance(thetas);
    if (at != 0) return done + at;
  }
  return std::nullopt;
}

double censored_ks_distance(std::vector<std::optional<double>> samples, const std::function<double(double)>& cdf,
                            double horizon) {
  if (samples.empty()) throw DomainError("KS distance of an empty sample");
  std::vector<double> times;
  for (const auto& s : samples) {
    if (s && *s <= horizon) times.push_back(*s);
  }
  std::sort(times.begin(), times.end());
  const double m = static_cast<double>(samples.size());
  double worst = 0.0;
  std::size_t i = 0;
  while (i < times.size()) {
    std::size_t j = i;
    while (j < times.size() && times[j] == times[i]) ++j;
    const double f = cdf(times[i]);
    worst = std::max({worst, std::abs(static_cast<double>(i) / m - f), std::abs(static_cast<double>(j) / m - f)});
    i = j;
  }
  worst = std::max(worst, std::abs(static_cast<double>(times.size()) / m - cdf(horizon)));
  return worst;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

std::string epoch_colour(std::size_t bucket, std::size_t epochs) {
  const double frac = epochs > 1 ? static_cast<double>(bucket) / static_cast<double>(epochs - 1) : 0.0;
  const int hue = static_cast<int>(std::lround(220.0 * (1.0 - frac)));
  return fmt::format("hsl({},75%,45%)", hue);
}

std::string fmt_num(double v) {
  std::string s = fmt::format("{:.6g}", v);
  return s == "-0" ? "0" : s;
}

struct Bounds {
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -std::numeric_limits<double>::infinity();
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();
  void add(Complex p) {
    xmin = std::min(xmin, p.real());
    xmax = std::max(xmax, p.real());
    ymin = std::min(ymin, p.imag());
    ymax = std::max(ymax, p.imag());
  }
};

std::string path_of(const PlanarSet& pts) {
  std::string d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    d += i == 0 ? "M" : " L";
    d += fmt_num(pts[i].real());
    d += ' ';
    d += fmt_num(-pts[i].imag());
  }
  return d;
}

}  // namespace

std::string render_svg(const ClusterState& cluster, const SvgOptions& options) {
  const std::size_t n = cluster.n();
  const std::size_t epochs = std::max<std::size_t>(1, options.epochs);
  const std::size_t resolution = options.resolution != 0 ? options.resolution : (n <= 2000 ? 16 : 3);

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{1});
  std::vector<PlanarSet> lines = particle_boundaries(cluster, all, resolution);
  std::vector<PlanarSet> fingers;
  std::vector<PlanarSet> gaps;
  for (const FingerSet& f : options.fingers) fingers.push_back(f.points);
  for (const GapTrajectory& g : options.gaps) gaps.push_back(g.points);

  Bounds box;
  if (options.log_coords) {
    for (PlanarSet& line : lines) {
      Complex prev;
      for (std::size_t i = 0; i < line.size(); ++i) {
        Complex l = log_coord(line[i]);
        if (i > 0) l.imag(l.imag() + kTwoPi * std::round((prev.imag() - l.imag()) / kTwoPi));
        prev = l;
        line[i] = l;
      }
    }
    box.add({0.0, -kPi});
    box.add({0.0, kPi});
  } else {
    for (auto* group : {&fingers, &gaps}) {
      for (PlanarSet& line : *group) {
        for (Complex& p : line) p = std::exp(p);
      }
    }
    box.add({-1.0, -1.0});
    box.add({1.0, 1.0});
  }
  for (const auto* group : {&lines, &fingers, &gaps}) {
    for (const PlanarSet& line : *group) {
      for (const Complex& p : line) box.add(p);
    }
  }

  std::string view;
  if (options.log_coords) {
    const double w = box.xmax - box.xmin;
    const double h = box.ymax - box.ymin;
    view = fmt_num(box.xmin) + " " + fmt_num(-box.ymax) + " " + fmt_num(w) + " " + fmt_num(h);
  } else {
    // Origin-centred square through the farthest drawn point.
    const double radius = std::max({-box.xmin, box.xmax, -box.ymin, box.ymax});
    view = fmt_num(-radius) + " " + fmt_num(-radius) + " " + fmt_num(2.0 * radius) + " " + fmt_num(2.0 * radius);
  }

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" + view + "\" width=\"800\" height=\"800\">\n";
  // Paths keep a constant on-screen width at any zoom.
  out += "<style>path{vector-effect:non-scaling-stroke}</style>\n";
  if (options.log_coords) {
    out += "<line id=\"disc\" x1=\"0\" y1=\"" + fmt_num(-box.ymax) + "\" x2=\"0\" y2=\"" + fmt_num(-box.ymin) +
           "\" stroke=\"#888888\" stroke-width=\"1\" vector-effect=\"non-scaling-stroke\"/>\n";
  } else {
    out += "<circle id=\"disc\" cx=\"0\" cy=\"0\" r=\"1\" fill=\"#dddddd\" stroke=\"#888888\" stroke-width=\"1\" "
           "vector-effect=\"non-scaling-stroke\"/>\n";
  }
  for (std::size_t b = 0; b < epochs && n > 0; ++b) {
    std::string group;
    for (std::size_t k = 1; k <= n; ++k) {
      if ((k - 1) * epochs / n != b) continue;
      group += "<path d=\"" + path_of(lines[k - 1]) + "\"/>\n";
    }
    if (group.empty()) continue;
    out += fmt::format("<g class=\"epoch{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1\">\n", b,
                       epoch_colour(b, epochs));
    out += group;
    out += "</g>\n";
  }
  auto overlay = [&](const std::vector<PlanarSet>& group, const char* cls, const char* colour) {
    if (group.empty()) return;
    out += fmt::format("<g class=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\">\n", cls, colour);
    for (const PlanarSet& line : group) out += "<path d=\"" + path_of(line) + "\"/>\n";
    out += "</g>\n";
  };
  overlay(fingers, "fingers", "#111111");
  overlay(gaps, "gaps", "#bbbbbb");
  out += "</svg>\n";
  return out;
}

double svg_view_radius(const std::string& svg) {
  static const std::regex view(R"re(viewBox="(\S+) (\S+) (\S+) (\S+)")re");
  std::smatch m;
  if (!std::regex_search(svg, m, view)) throw DomainError("svg has no viewBox");
  return std::max(-std::stod(m[1].str()), -std::stod(m[2].str()));
}

// ---------------------------------------------------------------------------
// Export

namespace {

json trajectories_json(const std::vector<FlowTrajectory>& trajectories) {
  json out = json::array();
  for (const auto& tr : trajectories) {
    json j = {{"point_id", tr.point_id}, {"scaling", to_string(tr.scaling)}, {"steps", tr.steps},
              {"times", tr.times},       {"angles", tr.angles},             {"coalesced_with", tr.coalesced_with}};
    j["coalesced_step"] = tr.coalesced_step ? json(*tr.coalesced_step) : json(nullptr);
    out.push_back(std::move(j));
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace

void export_data(const Exportable& object, const std::string& path, ExportFormat format) {
  std::visit(
      [&](const auto& obj) {
        using T = std::decay_t<decltype(obj)>;
        if constexpr (std::is_same_v<T, std::vector<FlowTrajectory>>) {
          if (format == ExportFormat::CSV) {
            write_trajectories_csv(obj, path);
          } else {
            write_text(path, trajectories_json(obj).dump(2) + "\n");
          }
        } else if (format == ExportFormat::CSV) {
          throw UnsupportedExport(std::is_same_v<T, ClusterState> ? "CSV export is not defined for a cluster"
                                                                  : "CSV export is not defined for a report");
        } else if constexpr (std::is_same_v<T, ClusterState>) {
          save_cluster(obj, path);
        } else {
          write_text(path, obj.to_json().dump(2) + "\n");
        }
      },
      object);
}

}  // namespace hl0

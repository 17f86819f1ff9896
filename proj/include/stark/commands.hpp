#pragma once

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "stark/common.hpp"
#include "stark/io.hpp"
#include "stark/metrics.hpp"
#include "stark/plot.hpp"
#include "stark/rng.hpp"
#include "stark/simulate.hpp"
#include "stark/solver.hpp"

namespace stark {

inline constexpr int kReportVersion = 1;

/// Inputs, overrides and output settings shared by all subcommands. Flags map
/// onto these fields one-to-one; a JSON config file may supply any of them.
struct RunConfig {
  std::string counts_path;
  std::string coords_path;
  std::string labels_path;
  std::string reads_path;
  std::string truth_path;
  std::string denoised_path;

  std::optional<double> reads_per_pixel_target;
  std::optional<std::int64_t> reads_total;
  std::optional<double> pixels_keep;  // fraction in (0,1) or absolute count >= 1

  std::string variant = "adaptive";
  std::string kernel = "exponential";
  double matern_nu = 0.5;
  HyperparameterOverrides overrides;

  std::uint64_t seed = 0;
  int repeats = 1;
  std::string out_dir = ".";
  bool plot = false;
  int threads = 1;  // repeats parallelism; never affects output bytes

  // simulate-only shape parameters
  Index grid_width = 24;
  Index grid_height = 24;
  Index genes = 20;
  Index regions = 4;
  double sharpness = 1.0;
  std::string noise = "multinomial";
};

namespace detail {

inline KernelFamily parse_kernel_family(const std::string& s) {
  if (s == "exponential") return KernelFamily::kExponential;
  if (s == "matern") return KernelFamily::kMatern;
  throw validation_error("unknown kernel family: " + s);
}

inline FitVariant::Kind parse_variant(const std::string& s) {
  if (s == "adaptive") return FitVariant::Kind::kAdaptive;
  if (s == "spatial") return FitVariant::Kind::kSpatial;
  if (s == "oracle") return FitVariant::Kind::kOracle;
  throw validation_error("unknown variant: " + s + " (expected adaptive|spatial|oracle)");
}

inline NoiseFamily parse_noise_family(const std::string& s) {
  if (s == "multinomial") return NoiseFamily::kMultinomial;
  if (s == "poisson") return NoiseFamily::kPoisson;
  throw validation_error("unknown noise family: " + s);
}

inline std::int64_t resolve_reads(const RunConfig& cfg, Index m) {
  if (cfg.reads_total && cfg.reads_per_pixel_target)
    throw validation_error("give either --reads-total or --reads-per-pixel-target, not both");
  if (cfg.reads_total) {
    if (*cfg.reads_total < 0) throw validation_error("--reads-total must be nonnegative");
    return *cfg.reads_total;
  }
  if (cfg.reads_per_pixel_target) {
    if (*cfg.reads_per_pixel_target < 0) throw validation_error("--reads-per-pixel-target must be nonnegative");
    return static_cast<std::int64_t>(std::llround(*cfg.reads_per_pixel_target * static_cast<double>(m)));
  }
  throw validation_error("a downsampling level is required: --reads-total or --reads-per-pixel-target");
}

inline Index resolve_pixels_keep(const RunConfig& cfg, Index m) {
  if (!cfg.pixels_keep) throw validation_error("--pixels-keep is required for the interpolation test");
  const double v = *cfg.pixels_keep;
  if (v <= 0.0) throw validation_error("--pixels-keep must be positive");
  if (v < 1.0) return std::max<Index>(1, static_cast<Index>(std::llround(v * static_cast<double>(m))));
  return static_cast<Index>(std::llround(v));
}

/// Runs `body(repeat)` over all repeats with at most `threads` workers.
/// Results must be written into per-repeat slots; output is identical for
/// any thread count.
inline void for_each_repeat(int repeats, int threads, const std::function<void(int)>& body) {
  if (repeats < 1) throw validation_error("repeat count must be at least 1");
  const int workers = std::max(1, std::min(threads, repeats));
  if (workers == 1) {
    for (int j = 0; j < repeats; ++j) body(j);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int j = next.fetch_add(1);
        if (j >= repeats) return;
        try {
          body(j);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline nlohmann::json hyperparameters_json(const Hyperparameters& hp) {
  return {
      {"length_scale", hp.length_scale}, {"s1", hp.s1},
      {"s2", hp.s2},                     {"tau", hp.tau},
      {"lambda", hp.lambda},             {"omega", hp.omega},
      {"alpha", hp.alpha},               {"lambda_rel", hp.lambda_rel},
      {"omega_rel", hp.omega_rel},       {"p_target", hp.p_target},
      {"iterations", hp.iterations},
  };
}

inline nlohmann::json trace_json(const FitTrace& trace) {
  return {{"objective", trace.objective_values}, {"iterate_shift", trace.iterate_shift}};
}

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Sample mean and standard deviation (n-1 normalization; 0 for n < 2).
inline Aggregate aggregate_stats(const std::vector<double>& values) {
  Aggregate out;
  const auto n = static_cast<double>(values.size());
  if (values.empty()) return out;
  double sum = 0.0;
  for (const double v : values) sum += v;
  out.mean = sum / n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (const double v : values) ss += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(ss / (n - 1.0));
  return out;
}

inline nlohmann::json aggregate_json(const std::vector<double>& values) {
  const Aggregate a = aggregate_stats(values);
  return {{"mean", a.mean}, {"std", a.stddev}, {"n", values.size()}};
}

inline MetricConfig resolved_metric_config(Index m) {
  MetricConfig cfg;
  cfg.overlap_k = std::min<Index>(cfg.overlap_k, m - 1);
  cfg.classifier_k = std::min<Index>(cfg.classifier_k, m);
  return cfg;
}

inline nlohmann::json metric_config_json(const MetricConfig& cfg) {
  return {{"pca_components", cfg.pca_components},
          {"classifier_k", cfg.classifier_k},
          {"overlap_k", cfg.overlap_k},
          {"log_scale", cfg.log_scale},
          {"centering", "per-matrix mean"}};
}

inline nlohmann::json provenance_json(const RunConfig& cfg, int repeats) {
  nlohmann::json seeds = nlohmann::json::array();
  for (int j = 0; j < repeats; ++j) seeds.push_back(derive_seed(cfg.seed, static_cast<std::uint64_t>(j)));
  return {{"prng", kPrngId},
          {"report_version", kReportVersion},
          {"master_seed", cfg.seed},
          {"repeat_seeds", seeds}};
}

inline std::vector<int> label_ids(const std::vector<std::string>& labels) {
  std::map<std::string, int> ids;
  for (const auto& l : labels) ids.emplace(l, 0);
  int next = 0;
  for (auto& [name, id] : ids) id = next++;
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(ids[l]);
  return out;
}

inline std::vector<std::string> id_names(const std::vector<std::string>& labels) {
  std::map<std::string, int> ids;
  for (const auto& l : labels) ids.emplace(l, 0);
  std::vector<std::string> names;
  names.reserve(ids.size());
  for (auto& [name, id] : ids) names.push_back(name);
  return names;
}

struct Dataset {
  CountsMatrix counts;
  PixelSet pixels;
  std::vector<std::string> label_names;  // empty when absent
  std::vector<int> labels;
};

inline Dataset load_dataset(const RunConfig& cfg, bool counts_required = true) {
  Dataset d;
  if (cfg.counts_path.empty()) {
    if (counts_required) throw validation_error("--counts is required");
  } else {
    d.counts = load_counts(cfg.counts_path);
  }
  if (cfg.coords_path.empty()) throw validation_error("--coords is required");
  d.pixels = load_coordinates(cfg.coords_path);
  if (!cfg.counts_path.empty() &&
      d.counts.rows != static_cast<Index>(d.pixels.size())) {
    throw validation_error("counts matrix has " + std::to_string(d.counts.rows) +
                           " rows but coordinates file has " + std::to_string(d.pixels.size()));
  }
  if (!cfg.labels_path.empty()) {
    d.label_names = load_labels(cfg.labels_path);
    if (d.label_names.size() != d.pixels.size())
      throw validation_error("labels file has " + std::to_string(d.label_names.size()) +
                             " rows but coordinates file has " + std::to_string(d.pixels.size()));
    d.labels = label_ids(d.label_names);
  }
  return d;
}

inline void write_report(const nlohmann::json& report, const std::string& out_dir,
                         const std::string& name = "report.json") {
  std::filesystem::create_directories(out_dir);
  const auto path = std::filesystem::path(out_dir) / name;
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write report: " + path.string());
  out << report.dump(2) << "\n";
}

inline nlohmann::json config_echo(const RunConfig& cfg) {
  // threads deliberately omitted: reports are byte-identical across thread counts
  nlohmann::json j{{"variant", cfg.variant},
                   {"kernel", cfg.kernel},
                   {"repeats", cfg.repeats},
                   {"seed", cfg.seed}};
  if (!cfg.counts_path.empty()) j["counts"] = cfg.counts_path;
  if (!cfg.coords_path.empty()) j["coords"] = cfg.coords_path;
  if (!cfg.labels_path.empty()) j["labels"] = cfg.labels_path;
  if (!cfg.truth_path.empty()) j["truth"] = cfg.truth_path;
  if (!cfg.denoised_path.empty()) j["denoised"] = cfg.denoised_path;
  if (cfg.reads_total) j["reads_total"] = *cfg.reads_total;
  if (cfg.reads_per_pixel_target) j["reads_per_pixel_target"] = *cfg.reads_per_pixel_target;
  if (cfg.pixels_keep) j["pixels_keep"] = *cfg.pixels_keep;
  return j;
}

struct RepeatOutcome {
  std::uint64_t seed = 0;
  std::int64_t reads_total = 0;
  Hyperparameters hp;
  FitTrace trace;
  double rel_err = 0.0;
  double overlap = 0.0;
  std::optional<double> accuracy;
  Index degenerate_rows = 0;
  Matrix denoised;             // retained for repeat 0 only
  std::vector<int> predicted;  // retained for repeat 0 only
};

inline nlohmann::json repeat_json(const RepeatOutcome& r) {
  nlohmann::json metrics{{"relative_error", r.rel_err}, {"knn_overlap", r.overlap}};
  if (r.accuracy) metrics["label_transfer_accuracy"] = *r.accuracy;
  return {{"seed", r.seed},
          {"reads_total", r.reads_total},
          {"hyperparameters", hyperparameters_json(r.hp)},
          {"trace", trace_json(r.trace)},
          {"degenerate_rows", r.degenerate_rows},
          {"metrics", metrics}};
}

inline nlohmann::json aggregate_block(const std::vector<RepeatOutcome>& outcomes) {
  std::vector<double> rel, ovl, acc;
  for (const auto& r : outcomes) {
    rel.push_back(r.rel_err);
    ovl.push_back(r.overlap);
    if (r.accuracy) acc.push_back(*r.accuracy);
  }
  nlohmann::json agg{{"relative_error", aggregate_json(rel)}, {"knn_overlap", aggregate_json(ovl)}};
  if (!acc.empty()) agg["label_transfer_accuracy"] = aggregate_json(acc);
  return agg;
}

inline void emit_test_outputs(const RunConfig& cfg, const Dataset& data,
                              const std::vector<RepeatOutcome>& outcomes) {
  std::filesystem::create_directories(cfg.out_dir);
  save_dense_matrix(outcomes.front().denoised,
                    (std::filesystem::path(cfg.out_dir) / "denoised.mtx").string());
  if (cfg.plot && !data.label_names.empty()) {
    save_label_map_svg((std::filesystem::path(cfg.out_dir) / "labels_true.svg").string(),
                       data.pixels, data.label_names);
    const auto names = id_names(data.label_names);
    std::vector<std::string> transferred;
    transferred.reserve(outcomes.front().predicted.size());
    for (const int id : outcomes.front().predicted)
      transferred.push_back(names[static_cast<std::size_t>(id)]);
    save_label_map_svg((std::filesystem::path(cfg.out_dir) / "labels_transferred.svg").string(),
                       data.pixels, transferred);
  }
}

}  // namespace detail

/// Denoising test: normalize the full counts to F0, downsample to R reads,
/// renormalize, fit, threshold the evaluations onto the simplex, score all
/// metrics against F0; repeated with independent derived seeds.
inline nlohmann::json cmd_denoise_test(const RunConfig& cfg) {
  const detail::Dataset data = detail::load_dataset(cfg);
  const Index m = data.counts.rows;
  const Matrix f0 = row_normalize(data.counts.dense());
  const std::int64_t r_target = detail::resolve_reads(cfg, m);
  if (r_target > data.counts.total())
    throw validation_error("requested reads exceed the total in the counts matrix");
  const auto kind = detail::parse_variant(cfg.variant);
  const auto family = detail::parse_kernel_family(cfg.kernel);
  const MetricConfig mcfg = detail::resolved_metric_config(m);

  const double l = resolve_length_scale(data.pixels, cfg.overrides);
  const double tau = cfg.overrides.tau.value_or(1.5 * l);
  const FitContext ctx = make_fit_context(data.pixels, KernelConfig{family, l, cfg.matern_nu}, tau);

  std::vector<detail::RepeatOutcome> outcomes(static_cast<std::size_t>(cfg.repeats));
  detail::for_each_repeat(cfg.repeats, cfg.threads, [&](int j) {
    auto& out = outcomes[static_cast<std::size_t>(j)];
    out.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(j));
    const CountsMatrix c_ds = downsample_counts(data.counts, r_target, out.seed);
    out.reads_total = c_ds.total();
    const Matrix y = row_normalize(c_ds.dense());
    const Vector reads = c_ds.row_sums();
    out.hp = autotune(ctx, y, reads, cfg.overrides);
    const FitVariant variant{kind, kind == FitVariant::Kind::kOracle ? f0 : Matrix{}};
    const DenoisedModel model = fit_with_context(ctx, y, out.hp, variant);
    out.trace = model.trace;
    SimplexDiagnostics diag;
    const Matrix f_bar = simplex_threshold(evaluate(model, data.pixels), &diag);
    out.degenerate_rows = diag.degenerate_rows;
    out.rel_err = relative_error(f0, f_bar);
    out.overlap = knn_overlap(f0, f_bar, mcfg);
    if (!data.labels.empty()) {
      const auto predicted = label_transfer_predictions(f0, data.labels, f_bar, mcfg);
      Index correct = 0;
      for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == data.labels[i]) ++correct;
      out.accuracy = static_cast<double>(correct) / static_cast<double>(m);
      if (j == 0) out.predicted = predicted;
    }
    if (j == 0) out.denoised = f_bar;
  });

  nlohmann::json report{{"command", "denoise-test"},
                        {"provenance", detail::provenance_json(cfg, cfg.repeats)},
                        {"config", detail::config_echo(cfg)},
                        {"metric_config", detail::metric_config_json(mcfg)},
                        {"aggregate", detail::aggregate_block(outcomes)}};
  auto& repeats = report["repeats"] = nlohmann::json::array();
  for (const auto& r : outcomes) repeats.push_back(detail::repeat_json(r));
  detail::emit_test_outputs(cfg, data, outcomes);
  detail::write_report(report, cfg.out_dir);
  return report;
}

/// Interpolation test: as the denoising test, but the fit only sees a uniform
/// pixel subset; the model is evaluated at all original pixels.
inline nlohmann::json cmd_interp_test(const RunConfig& cfg) {
  const detail::Dataset data = detail::load_dataset(cfg);
  const Index m = data.counts.rows;
  const Matrix f0 = row_normalize(data.counts.dense());
  const std::int64_t r_target = detail::resolve_reads(cfg, m);
  if (r_target > data.counts.total())
    throw validation_error("requested reads exceed the total in the counts matrix");
  const Index m_keep = detail::resolve_pixels_keep(cfg, m);
  const auto kind = detail::parse_variant(cfg.variant);
  const auto family = detail::parse_kernel_family(cfg.kernel);
  const MetricConfig mcfg = detail::resolved_metric_config(m);

  std::vector<detail::RepeatOutcome> outcomes(static_cast<std::size_t>(cfg.repeats));
  detail::for_each_repeat(cfg.repeats, cfg.threads, [&](int j) {
    auto& out = outcomes[static_cast<std::size_t>(j)];
    out.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(j));
    const CountsMatrix c_ds = downsample_counts(data.counts, r_target, out.seed);
    const Matrix y_full = row_normalize(c_ds.dense());
    const Subsample sub = subsample_pixels(y_full, data.pixels, m_keep, out.seed);
    const Vector reads_full = c_ds.row_sums();
    Vector reads(m_keep);
    std::int64_t kept_reads = 0;
    for (Index i = 0; i < m_keep; ++i) {
      reads(i) = reads_full(sub.indices[static_cast<std::size_t>(i)]);
      kept_reads += static_cast<std::int64_t>(reads(i));
    }
    out.reads_total = kept_reads;

    const double l = resolve_length_scale(sub.pixels, cfg.overrides);
    const double tau = cfg.overrides.tau.value_or(1.5 * l);
    const FitContext ctx =
        make_fit_context(sub.pixels, KernelConfig{family, l, cfg.matern_nu}, tau);
    out.hp = autotune(ctx, sub.y, reads, cfg.overrides);
    Matrix oracle_truth;
    if (kind == FitVariant::Kind::kOracle) {
      oracle_truth.resize(m_keep, f0.cols());
      for (Index i = 0; i < m_keep; ++i)
        oracle_truth.row(i) = f0.row(sub.indices[static_cast<std::size_t>(i)]);
    }
    const FitVariant variant{kind, std::move(oracle_truth)};
    const DenoisedModel model = fit_with_context(ctx, sub.y, out.hp, variant);
    out.trace = model.trace;
    SimplexDiagnostics diag;
    const Matrix f_bar = simplex_threshold(evaluate(model, data.pixels), &diag);
    out.degenerate_rows = diag.degenerate_rows;
    out.rel_err = relative_error(f0, f_bar);
    out.overlap = knn_overlap(f0, f_bar, mcfg);
    if (!data.labels.empty()) {
      const auto predicted = label_transfer_predictions(f0, data.labels, f_bar, mcfg);
      Index correct = 0;
      for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == data.labels[i]) ++correct;
      out.accuracy = static_cast<double>(correct) / static_cast<double>(m);
      if (j == 0) out.predicted = predicted;
    }
    if (j == 0) out.denoised = f_bar;
  });

  nlohmann::json report{{"command", "interp-test"},
                        {"provenance", detail::provenance_json(cfg, cfg.repeats)},
                        {"config", detail::config_echo(cfg)},
                        {"metric_config", detail::metric_config_json(mcfg)},
                        {"aggregate", detail::aggregate_block(outcomes)}};
  auto& repeats = report["repeats"] = nlohmann::json::array();
  for (const auto& r : outcomes) repeats.push_back(detail::repeat_json(r));
  detail::emit_test_outputs(cfg, data, outcomes);
  detail::write_report(report, cfg.out_dir);
  return report;
}

/// One denoising run on the given counts: autotune, fit, threshold, emit the
/// denoised matrix plus a report with the resolved hyperparameters and trace.
inline nlohmann::json cmd_denoise(const RunConfig& cfg) {
  const detail::Dataset data = detail::load_dataset(cfg);
  const Matrix y = row_normalize(data.counts.dense());
  Vector reads = data.counts.row_sums();
  if (!cfg.reads_path.empty()) {
    reads = load_reads(cfg.reads_path);
    if (reads.size() != data.counts.rows)
      throw validation_error("reads file length does not match the counts matrix");
  }
  const auto kind = detail::parse_variant(cfg.variant);
  const auto family = detail::parse_kernel_family(cfg.kernel);

  const double l = resolve_length_scale(data.pixels, cfg.overrides);
  const double tau = cfg.overrides.tau.value_or(1.5 * l);
  const FitContext ctx = make_fit_context(data.pixels, KernelConfig{family, l, cfg.matern_nu}, tau);
  const Hyperparameters hp = autotune(ctx, y, reads, cfg.overrides);

  Matrix oracle_truth;
  if (kind == FitVariant::Kind::kOracle) {
    if (cfg.truth_path.empty())
      throw validation_error("the oracle variant requires --truth");
    oracle_truth = load_dense_matrix(cfg.truth_path);
    if (oracle_truth.rows() != y.rows() || oracle_truth.cols() != y.cols())
      throw validation_error("--truth shape does not match the counts matrix");
  }
  const FitVariant variant{kind, std::move(oracle_truth)};
  const DenoisedModel model = fit_with_context(ctx, y, hp, variant);
  SimplexDiagnostics diag;
  const Matrix f_bar = simplex_threshold(evaluate(model, data.pixels), &diag);

  std::filesystem::create_directories(cfg.out_dir);
  save_dense_matrix(f_bar, (std::filesystem::path(cfg.out_dir) / "denoised.mtx").string());
  if (cfg.plot && !data.label_names.empty()) {
    save_label_map_svg((std::filesystem::path(cfg.out_dir) / "labels_true.svg").string(),
                       data.pixels, data.label_names);
  }
  nlohmann::json report{{"command", "denoise"},
                        {"provenance", detail::provenance_json(cfg, 0)},
                        {"config", detail::config_echo(cfg)},
                        {"hyperparameters", detail::hyperparameters_json(hp)},
                        {"trace", detail::trace_json(model.trace)},
                        {"degenerate_rows", diag.degenerate_rows}};
  detail::write_report(report, cfg.out_dir);
  return report;
}

/// Synthetic ground truth plus a noisy counts draw from the two-step noise model.
inline nlohmann::json cmd_simulate(const RunConfig& cfg) {
  const SyntheticImage image = make_synthetic(cfg.grid_width, cfg.grid_height, cfg.genes,
                                              cfg.regions, cfg.sharpness, cfg.seed);
  const Index m = static_cast<Index>(image.pixels.size());
  NoiseModelConfig noise;
  noise.total_reads = detail::resolve_reads(cfg, m);
  noise.sampling_frequencies = NoiseModelConfig::uniform_frequencies(m);
  noise.family = detail::parse_noise_family(cfg.noise);
  noise.seed = derive_seed(cfg.seed, 1);
  const auto reads = sample_reads(noise);
  const CountsMatrix counts = sample_counts(image.f_star, reads, derive_seed(cfg.seed, 2));

  std::filesystem::create_directories(cfg.out_dir);
  const auto dir = std::filesystem::path(cfg.out_dir);
  save_coordinates(image.pixels, (dir / "coords.csv").string());
  save_dense_matrix(image.f_star, (dir / "truth.mtx").string());
  save_counts(counts, (dir / "counts.mtx").string());
  std::vector<std::string> label_names;
  label_names.reserve(image.labels.size());
  for (const int l : image.labels) label_names.push_back("region_" + std::to_string(l));
  save_labels(label_names, (dir / "labels.csv").string());
  if (cfg.plot) save_label_map_svg((dir / "labels_true.svg").string(), image.pixels, label_names);

  nlohmann::json report{{"command", "simulate"},
                        {"provenance", detail::provenance_json(cfg, 0)},
                        {"config", detail::config_echo(cfg)},
                        {"grid", {{"width", cfg.grid_width}, {"height", cfg.grid_height}}},
                        {"genes", cfg.genes},
                        {"regions", cfg.regions},
                        {"sharpness", cfg.sharpness},
                        {"noise", cfg.noise},
                        {"reads_total", counts.total()}};
  detail::write_report(report, cfg.out_dir);
  return report;
}

/// Downsample a counts matrix to a target number of retained reads.
inline nlohmann::json cmd_downsample(const RunConfig& cfg) {
  if (cfg.counts_path.empty()) throw validation_error("--counts is required");
  const CountsMatrix c0 = load_counts(cfg.counts_path);
  const std::int64_t r_target = detail::resolve_reads(cfg, c0.rows);
  const CountsMatrix c_ds = downsample_counts(c0, r_target, cfg.seed);
  std::filesystem::create_directories(cfg.out_dir);
  save_counts(c_ds, (std::filesystem::path(cfg.out_dir) / "downsampled.mtx").string());
  nlohmann::json report{{"command", "downsample"},
                        {"provenance", detail::provenance_json(cfg, 0)},
                        {"config", detail::config_echo(cfg)},
                        {"input_total", c0.total()},
                        {"retained_total", c_ds.total()}};
  detail::write_report(report, cfg.out_dir);
  return report;
}

/// Score a denoised matrix against the reference: all three metrics.
inline nlohmann::json cmd_evaluate(const RunConfig& cfg) {
  Matrix f0;
  Index m = 0;
  if (!cfg.truth_path.empty()) {
    f0 = load_dense_matrix(cfg.truth_path);
  } else if (!cfg.counts_path.empty()) {
    f0 = row_normalize(load_counts(cfg.counts_path).dense());
  } else {
    throw validation_error("a reference is required: --truth or --counts");
  }
  m = f0.rows();
  if (cfg.denoised_path.empty()) throw validation_error("--denoised is required");
  const Matrix f_bar = load_dense_matrix(cfg.denoised_path);
  if (f_bar.rows() != f0.rows() || f_bar.cols() != f0.cols())
    throw validation_error("denoised matrix shape does not match the reference");
  const MetricConfig mcfg = detail::resolved_metric_config(m);
  nlohmann::json metrics{{"relative_error", relative_error(f0, f_bar)},
                         {"knn_overlap", knn_overlap(f0, f_bar, mcfg)}};
  if (!cfg.labels_path.empty()) {
    const auto label_names = load_labels(cfg.labels_path);
    if (static_cast<Index>(label_names.size()) != m)
      throw validation_error("labels file length does not match the reference matrix");
    const auto labels = detail::label_ids(label_names);
    metrics["label_transfer_accuracy"] = label_transfer_accuracy(f0, labels, f_bar, mcfg);
  }
  nlohmann::json report{{"command", "evaluate"},
                        {"provenance", detail::provenance_json(cfg, 0)},
                        {"config", detail::config_echo(cfg)},
                        {"metric_config", detail::metric_config_json(mcfg)},
                        {"metrics", metrics}};
  detail::write_report(report, cfg.out_dir);
  return report;
}

/// Resolve hyperparameters for the given data without fitting.
inline nlohmann::json cmd_autotune(const RunConfig& cfg) {
  const detail::Dataset data = detail::load_dataset(cfg);
  const Matrix y = row_normalize(data.counts.dense());
  Vector reads = data.counts.row_sums();
  if (!cfg.reads_path.empty()) {
    reads = load_reads(cfg.reads_path);
    if (reads.size() != data.counts.rows)
      throw validation_error("reads file length does not match the counts matrix");
  }
  const auto family = detail::parse_kernel_family(cfg.kernel);
  const double l = resolve_length_scale(data.pixels, cfg.overrides);
  const double tau = cfg.overrides.tau.value_or(1.5 * l);
  const FitContext ctx = make_fit_context(data.pixels, KernelConfig{family, l, cfg.matern_nu}, tau);
  const Hyperparameters hp = autotune(ctx, y, reads, cfg.overrides);
  nlohmann::json report{{"command", "autotune"},
                        {"provenance", detail::provenance_json(cfg, 0)},
                        {"config", detail::config_echo(cfg)},
                        {"hyperparameters", detail::hyperparameters_json(hp)}};
  detail::write_report(report, cfg.out_dir);
  return report;
}

}  // namespace stark

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>

#include "stark/commands.hpp"

namespace {

void add_input_flags(CLI::App* cmd, stark::RunConfig& cfg) {
  cmd->add_option("--counts", cfg.counts_path, "pixels-by-genes counts (Matrix Market or CSV)");
  cmd->add_option("--coords", cfg.coords_path, "pixel coordinates CSV with columns x,y");
  cmd->add_option("--labels", cfg.labels_path, "per-pixel labels, single-column CSV");
  cmd->add_option("--reads-file", cfg.reads_path, "per-pixel read counts, single-column CSV");
}

void add_sampling_flags(CLI::App* cmd, stark::RunConfig& cfg) {
  cmd->add_option("--reads-per-pixel-target", cfg.reads_per_pixel_target,
                  "downsampling level as mean reads per pixel");
  cmd->add_option("--reads-total", cfg.reads_total, "downsampling level as total retained reads");
}

void add_hyper_flags(CLI::App* cmd, stark::RunConfig& cfg) {
  cmd->add_option("--variant", cfg.variant, "adaptive|spatial|oracle")->default_str("adaptive");
  cmd->add_option("--iters", cfg.overrides.iterations, "number of block coordinate iterations");
  cmd->add_option("--alpha", cfg.overrides.alpha, "overall regularization strength");
  cmd->add_option("--omega-rel", cfg.overrides.omega_rel, "relative graph regularization strength");
  cmd->add_option("--p-target", cfg.overrides.p_target, "target fit ratio for the alpha bisection");
  cmd->add_option("--length-scale", cfg.overrides.length_scale, "kernel length scale");
  cmd->add_option("--s1", cfg.overrides.s1, "expression scale");
  cmd->add_option("--s2", cfg.overrides.s2, "spatial scale");
  cmd->add_option("--tau", cfg.overrides.tau, "edge threshold");
  cmd->add_option("--lambda", cfg.overrides.lambda, "ridge strength");
  cmd->add_option("--omega", cfg.overrides.omega, "graph regularization strength");
  cmd->add_option("--kernel", cfg.kernel, "exponential|matern")->default_str("exponential");
  cmd->add_option("--nu", cfg.matern_nu, "Matern smoothness (1/2, 3/2, 5/2 have closed forms)");
}

void add_run_flags(CLI::App* cmd, stark::RunConfig& cfg) {
  cmd->add_option("--seed", cfg.seed, "master seed");
  cmd->add_option("--repeats", cfg.repeats, "independent repeats with derived seeds");
  cmd->add_option("--out", cfg.out_dir, "output directory");
  cmd->add_flag("--plot", cfg.plot, "emit SVG label maps");
  cmd->add_option("--threads", cfg.threads, "worker threads for repeats (output-invariant)");
}

// JSON config file with keys named after the flags; flags given on the
// command line take precedence because CLI11 only writes parsed options.
void apply_config_file(stark::RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw stark::validation_error("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  auto str = [&](const char* key, std::string& field) {
    if (j.contains(key)) field = j.at(key).get<std::string>();
  };
  str("counts", cfg.counts_path);
  str("coords", cfg.coords_path);
  str("labels", cfg.labels_path);
  str("reads-file", cfg.reads_path);
  str("truth", cfg.truth_path);
  str("denoised", cfg.denoised_path);
  str("variant", cfg.variant);
  str("kernel", cfg.kernel);
  str("noise", cfg.noise);
  str("out", cfg.out_dir);
  if (j.contains("reads-per-pixel-target"))
    cfg.reads_per_pixel_target = j.at("reads-per-pixel-target").get<double>();
  if (j.contains("reads-total")) cfg.reads_total = j.at("reads-total").get<std::int64_t>();
  if (j.contains("pixels-keep")) cfg.pixels_keep = j.at("pixels-keep").get<double>();
  if (j.contains("iters")) cfg.overrides.iterations = j.at("iters").get<int>();
  if (j.contains("alpha")) cfg.overrides.alpha = j.at("alpha").get<double>();
  if (j.contains("omega-rel")) cfg.overrides.omega_rel = j.at("omega-rel").get<double>();
  if (j.contains("p-target")) cfg.overrides.p_target = j.at("p-target").get<double>();
  if (j.contains("length-scale")) cfg.overrides.length_scale = j.at("length-scale").get<double>();
  if (j.contains("s1")) cfg.overrides.s1 = j.at("s1").get<double>();
  if (j.contains("s2")) cfg.overrides.s2 = j.at("s2").get<double>();
  if (j.contains("tau")) cfg.overrides.tau = j.at("tau").get<double>();
  if (j.contains("lambda")) cfg.overrides.lambda = j.at("lambda").get<double>();
  if (j.contains("omega")) cfg.overrides.omega = j.at("omega").get<double>();
  if (j.contains("nu")) cfg.matern_nu = j.at("nu").get<double>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("repeats")) cfg.repeats = j.at("repeats").get<int>();
  if (j.contains("plot")) cfg.plot = j.at("plot").get<bool>();
  if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
  if (j.contains("grid-width")) cfg.grid_width = j.at("grid-width").get<stark::Index>();
  if (j.contains("grid-height")) cfg.grid_height = j.at("grid-height").get<stark::Index>();
  if (j.contains("genes")) cfg.genes = j.at("genes").get<stark::Index>();
  if (j.contains("regions")) cfg.regions = j.at("regions").get<stark::Index>();
  if (j.contains("sharpness")) cfg.sharpness = j.at("sharpness").get<double>();
}

std::string scan_for_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STARK: denoising and interpolation of spatial gene expression"};
  app.require_subcommand(1);

  stark::RunConfig cfg;
  std::string config_path = scan_for_config(argc, argv);
  app.add_option("--config", config_path, "JSON file supplying any flag; flags override it");
  try {
    if (!config_path.empty()) apply_config_file(cfg, config_path);
  } catch (const std::exception& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  }

  using Handler = std::function<nlohmann::json(const stark::RunConfig&)>;
  struct Sub {
    CLI::App* cmd;
    Handler run;
  };
  std::vector<Sub> subs;

  auto* denoise = app.add_subcommand("denoise", "denoise a counts matrix");
  add_input_flags(denoise, cfg);
  add_hyper_flags(denoise, cfg);
  add_run_flags(denoise, cfg);
  denoise->add_option("--truth", cfg.truth_path, "ground-truth matrix for the oracle variant");
  subs.push_back({denoise, stark::cmd_denoise});

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  add_sampling_flags(simulate, cfg);
  add_run_flags(simulate, cfg);
  simulate->add_option("--grid-width", cfg.grid_width, "grid width in pixels");
  simulate->add_option("--grid-height", cfg.grid_height, "grid height in pixels");
  simulate->add_option("--genes", cfg.genes, "gene count");
  simulate->add_option("--regions", cfg.regions, "region count");
  simulate->add_option("--sharpness", cfg.sharpness, "boundary sharpness (transition width 1/sharpness)");
  simulate->add_option("--noise", cfg.noise, "multinomial|poisson")->default_str("multinomial");
  subs.push_back({simulate, stark::cmd_simulate});

  auto* downsample = app.add_subcommand("downsample", "retain a uniform subset of reads");
  downsample->add_option("--counts", cfg.counts_path, "input counts matrix");
  add_sampling_flags(downsample, cfg);
  add_run_flags(downsample, cfg);
  subs.push_back({downsample, stark::cmd_downsample});

  auto* evaluate = app.add_subcommand("evaluate", "score a denoised matrix against a reference");
  add_input_flags(evaluate, cfg);
  evaluate->add_option("--truth", cfg.truth_path, "reference expression matrix (Matrix Market)");
  evaluate->add_option("--denoised", cfg.denoised_path, "denoised expression matrix (Matrix Market)");
  add_run_flags(evaluate, cfg);
  subs.push_back({evaluate, stark::cmd_evaluate});

  auto* denoise_test = app.add_subcommand("denoise-test", "downsample, denoise, score against F0");
  add_input_flags(denoise_test, cfg);
  add_sampling_flags(denoise_test, cfg);
  add_hyper_flags(denoise_test, cfg);
  add_run_flags(denoise_test, cfg);
  subs.push_back({denoise_test, stark::cmd_denoise_test});

  auto* interp_test = app.add_subcommand("interp-test", "subsample pixels, denoise, score at all pixels");
  add_input_flags(interp_test, cfg);
  add_sampling_flags(interp_test, cfg);
  interp_test->add_option("--pixels-keep", cfg.pixels_keep,
                          "pixels to retain: fraction below 1, absolute count otherwise");
  add_hyper_flags(interp_test, cfg);
  add_run_flags(interp_test, cfg);
  subs.push_back({interp_test, stark::cmd_interp_test});

  auto* autotune = app.add_subcommand("autotune", "resolve hyperparameters without fitting");
  add_input_flags(autotune, cfg);
  add_hyper_flags(autotune, cfg);
  add_run_flags(autotune, cfg);
  subs.push_back({autotune, stark::cmd_autotune});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
        e.get_name() == "CallForVersion") {
      return app.exit(e);
    }
    app.exit(e);
    return 2;
  }

  try {
    for (const auto& sub : subs) {
      if (sub.cmd->parsed()) {
        const auto report = sub.run(cfg);
        std::cout << report.dump(2) << "\n";
        return 0;
      }
    }
    std::cerr << "no subcommand given\n";
    return 2;
  } catch (const stark::validation_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const stark::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

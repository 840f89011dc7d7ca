// Command-line front end. --config takes a JSON object keyed by subcommand,
// e.g. {"fit": {"method": "gp", "kernels": ["se"]}}; inner keys are long flag
// names and flags given on the command line win.

#include <braggedge/harness.hpp>
#include <braggedge/io.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace braggedge;

namespace {

class JsonConfig : public CLI::Config {
public:
  std::string to_config(const CLI::App *app, bool default_also, bool, std::string) const override {
    Json out = Json::object();
    for (const CLI::Option *opt : app->get_options()) {
      if (opt->get_lnames().empty() || opt->get_configurable() == false) {
        continue;
      }
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto &results = opt->results();
        out[name] = results.size() == 1 ? Json(results.front()) : Json(results);
      } else if (default_also && !opt->get_default_str().empty()) {
        out[name] = opt->get_default_str();
      }
    }
    return out.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream &input) const override {
    Json j;
    try {
      j = Json::parse(input);
    } catch (const std::exception &e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) {
      throw CLI::ConversionError("config must be a JSON object");
    }
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

private:
  static std::string scalar(const Json &v) {
    if (v.is_string()) {
      return v.get<std::string>();
    }
    if (v.is_boolean()) {
      return v.get<bool>() ? "true" : "false";
    }
    return v.dump();
  }

  static void collect(const Json &j, const std::vector<std::string> &parents,
                      std::vector<CLI::ConfigItem> &items) {
    for (const auto &[key, value] : j.items()) {
      if (value.is_object()) {
        std::vector<std::string> next = parents;
        next.push_back(key);
        collect(value, next, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        // Lists travel as one comma-separated value, as they do on the
        // command line.
        std::string joined;
        for (const Json &v : value) {
          joined += (joined.empty() ? "" : ",") + scalar(v);
        }
        item.inputs.push_back(joined);
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

std::vector<double> parse_list(const std::string &text, std::size_t expected,
                               const std::string &flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      require(used == cell.size(), ErrorKind::invalid_argument, "");
    } catch (const std::exception &) {
      fail(ErrorKind::invalid_argument, flag + ": '" + cell + "' is not a number");
    }
  }
  require(expected == 0 || out.size() == expected, ErrorKind::invalid_argument,
          flag + ": expected " + std::to_string(expected) + " comma-separated numbers");
  return out;
}

void emit(const Json &j, const std::string &path) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream out = open_output(path);
    out << j.dump(2) << '\n';
  }
}

// Simulation settings shared by simulate and trial-study.
struct SimulationFlags {
  double noise_scale = 1.0;
  int groups = 100;
  int trials_per_group = 10;
  int trials = 0;
  std::uint64_t seed = 0;
  bool noisy_reference = false;
  std::string sigma_b_range, tau_range, strain_range, baselines;
  double lambda0 = default_lambda_hkl;
  double grid_low = default_lambda_hkl - default_half_window;
  double grid_high = default_lambda_hkl + default_half_window;
  int samples = static_cast<int>(default_samples);
  std::optional<double> noise_a, noise_b;

  void add(CLI::App *app) {
    app->add_option("--noise-scale", noise_scale, "Multiplier on the base noise std")
        ->capture_default_str();
    app->add_option("--groups", groups, "Edge shapes drawn")->capture_default_str();
    app->add_option("--trials-per-group", trials_per_group, "Noise draws per edge shape")
        ->capture_default_str();
    app->add_option("--trials", trials,
                    "Total trials; split over --groups (one per group when fewer)");
    app->add_option("--seed", seed, "RNG seed")->capture_default_str();
    app->add_flag("--noisy-reference", noisy_reference,
                  "GP compares against a noisy stress-free spectrum");
    app->add_option("--sigma-b-range", sigma_b_range, "lo,hi in Angstrom");
    app->add_option("--tau-range", tau_range, "lo,hi in Angstrom");
    app->add_option("--strain-range", strain_range, "lo,hi (dimensionless)");
    app->add_option("--baselines", baselines, "a0,b0,a_hkl,b_hkl");
    app->add_option("--lambda0", lambda0, "Stress-free edge (Angstrom)")->capture_default_str();
    app->add_option("--grid-low", grid_low)->capture_default_str();
    app->add_option("--grid-high", grid_high)->capture_default_str();
    app->add_option("--samples", samples, "Wavelength samples")->capture_default_str();
    app->add_option("--noise-a", noise_a, "Variance law intercept");
    app->add_option("--noise-b", noise_b, "Variance law slope");
  }

  TrialConfig config() const {
    TrialConfig c;
    c.noise_scale = noise_scale;
    c.n_groups = groups;
    c.trials_per_group = trials_per_group;
    if (trials > 0) {
      if (trials <= groups) {
        c.n_groups = trials;
        c.trials_per_group = 1;
      } else {
        require(trials % groups == 0, ErrorKind::invalid_argument,
                "--trials must be a multiple of --groups");
        c.trials_per_group = trials / groups;
      }
    }
    c.seed = seed;
    c.noisy_reference = noisy_reference;
    auto range = [](const std::string &text, const std::string &flag, std::array<double, 2> &r) {
      if (!text.empty()) {
        const auto v = parse_list(text, 2, flag);
        r = {v[0], v[1]};
      }
    };
    range(sigma_b_range, "--sigma-b-range", c.sigma_B_range);
    range(tau_range, "--tau-range", c.tau_range);
    range(strain_range, "--strain-range", c.strain_range);
    if (!baselines.empty()) {
      const auto v = parse_list(baselines, 4, "--baselines");
      c.baselines = {v[0], v[1], v[2], v[3]};
    }
    c.lambda0 = lambda0;
    c.grid = {grid_low, grid_high, samples};
    if (noise_a) {
      c.noise_model.a = *noise_a;
    }
    if (noise_b) {
      c.noise_model.b = *noise_b;
    }
    c.validate();
    return c;
  }
};

struct GPFlags {
  std::vector<std::string> kernels;
  int samples = 1000;
  int starts = 5;

  void add(CLI::App *app) {
    app->add_option("--kernels", kernels, "GP kernel candidates (se, matern32, matern52)")
        ->delimiter(',');
    app->add_option("--gp-samples", samples, "Monte Carlo draws of the gradient peak")
        ->capture_default_str();
    app->add_option("--gp-starts", starts, "Hyperparameter multi-starts per kernel")
        ->capture_default_str();
  }

  void apply(GPStrainOptions &options) const {
    if (!kernels.empty()) {
      options.fit.kernels.clear();
      for (const std::string &k : kernels) {
        options.fit.kernels.push_back(kernel_kind_from_string(k));
      }
    }
    options.n_samples = samples;
    options.fit.hyper.starts = starts;
  }
};

// ---------------------------------------------------------------------------

void run_simulate(const SimulationFlags &flags, const std::string &out_dir) {
  const TrialConfig config = flags.config();
  const std::filesystem::path dir(out_dir);
  Json manifest;
  manifest["config"] = to_json(config);
  Json trials = Json::array();
  for (int g = 0; g < config.n_groups; ++g) {
    for (int t = 0; t < config.trials_per_group; ++t) {
      const Trial trial = generate_trial(config, g, t);
      const std::string stem = "g" + std::to_string(g) + "_t" + std::to_string(t);
      {
        std::ofstream out = open_output(dir / (stem + ".csv"));
        write_spectrum_csv(out, trial.spectrum);
      }
      {
        std::ofstream out = open_output(dir / (stem + "_reference.csv"));
        write_spectrum_csv(out, trial.reference);
      }
      Json entry;
      entry["group"] = g;
      entry["trial"] = t;
      entry["spectrum"] = stem + ".csv";
      entry["reference"] = stem + "_reference.csv";
      if (trial.noisy_reference) {
        std::ofstream out = open_output(dir / (stem + "_reference_noisy.csv"));
        write_spectrum_csv(out, *trial.noisy_reference);
        entry["noisy_reference"] = stem + "_reference_noisy.csv";
      }
      entry["true_strain"] = trial.truth.strain;
      entry["params"] = to_json(trial.truth.params);
      trials.push_back(entry);
    }
  }
  manifest["trials"] = trials;
  std::ofstream out = open_output(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  Json summary;
  summary["written"] = config.total_trials();
  summary["manifest"] = (dir / "manifest.json").string();
  std::cout << summary.dump(2) << '\n';
}

struct FitFlags {
  std::string input, format = "csv_tr", method = "santisteban", edge_model = "kropff";
  std::string windows, reference, out;
  bool reference_noiseless = false;
  double lambda0 = default_lambda_hkl;
  std::optional<double> zeta0;
  double noise_scale = 1.0;
  int sg_window = 0, sg_order = 0;
  std::uint64_t seed = 0;
  std::optional<double> noise_a, noise_b;
  GPFlags gp;
};

EdgeWindows parse_windows(const std::string &text, const TransmissionSpectrum &s) {
  if (text.empty()) {
    return default_windows(s);
  }
  const auto v = parse_list(text, 6, "--windows");
  return {{v[0], v[1]}, {v[2], v[3]}, {v[4], v[5]}};
}

IngestResult load(const std::string &path, const FitFlags &f) {
  std::optional<NoiseModel> noise;
  if (f.noise_a || f.noise_b) {
    noise = NoiseModel{f.noise_a.value_or(0.0), f.noise_b.value_or(0.0)};
  } else if (f.format == "csv_counts") {
    noise = default_noise_model();
  }
  return ingest_spectrum(path, spectrum_format_from_string(f.format), noise);
}

void run_fit(const FitFlags &f) {
  const IngestResult in = load(f.input, f);
  const TransmissionSpectrum &s = in.spectrum;
  const EdgeWindows windows = parse_windows(f.windows, s);
  const Method method = method_from_string(f.method);
  Json out;
  out["method"] = f.method;
  out["dropped_rows"] = in.dropped_rows;
  switch (method) {
  case Method::santisteban: {
    const SantistebanFit fit =
        fit_santisteban(s, windows, edge_model_from_string(f.edge_model), f.lambda0);
    out["strain"] = to_json(fit.strain);
    out["baselines"] = to_json(fit.baselines);
    out["edge_fit"] = to_json(fit.edge_fit);
    break;
  }
  case Method::tremsin: {
    const TremsinFit fit =
        fit_tremsin_cropped(s, windows.edge, f.lambda0, tremsin_crop_for_noise(f.noise_scale));
    out["strain"] = to_json(fit.strain);
    out["fit"] = to_json(fit.fit);
    break;
  }
  case Method::xcorr: {
    require(!f.reference.empty(), ErrorKind::invalid_argument,
            "xcorr needs --reference (stress-free spectrum)");
    const IngestResult ref = load(f.reference, f);
    XcorrOptions options;
    options.sg = sg_defaults_for_noise(f.noise_scale);
    if (f.sg_window > 0) {
      options.sg.window_length = f.sg_window;
    }
    if (f.sg_order > 0) {
      options.sg.polynomial_order = f.sg_order;
    }
    options.sg.validate();
    const XcorrFit fit = fit_xcorr_strain(s, ref.spectrum, f.lambda0, options);
    out["strain"] = to_json(fit.strain);
    out["voigt"] = to_json(fit.voigt);
    break;
  }
  case Method::gp: {
    GPStrainOptions options;
    f.gp.apply(options);
    Rng rng = make_stream(f.seed, 0, 0, 7);
    GPStrainResult r;
    if (!f.reference.empty()) {
      const IngestResult ref = load(f.reference, f);
      r = f.reference_noiseless ? gp_strain_profile(s, ref.spectrum, windows, options, rng)
                                : gp_strain(s, ref.spectrum, windows, options, rng);
    } else {
      r = gp_strain(s, windows, f.zeta0.value_or(f.lambda0), options, rng);
    }
    out["strain"] = to_json(r.strain);
    out["baselines"] = to_json(r.fit.baselines);
    out["hyperparameters"] = to_json(r.fit.hyper);
    const auto [zmean, zstd] = stats::mean_std_population(r.zeta.values);
    out["zeta"] = {{"mean", zmean}, {"std", zstd}, {"grid_pitch", r.zeta.grid_pitch}};
    break;
  }
  }
  emit(out, f.out);
}

struct StudyFlags {
  std::vector<std::string> methods{"santisteban", "tremsin", "xcorr", "gp"};
  int workers = 1;
  int bins = 40;
  std::string out;
  GPFlags gp;
};

void run_study(const SimulationFlags &sim, const StudyFlags &f) {
  StudyOptions options;
  options.methods.clear();
  for (const std::string &name : f.methods) {
    options.methods.push_back(method_from_string(name));
  }
  options.workers = f.workers;
  options.histogram_bins = f.bins;
  f.gp.apply(options.settings.gp);
  if (f.gp.kernels.empty()) {
    options.settings.gp.fit.kernels = MethodSettings::study_gp_options().fit.kernels;
  }
  const StudyResult result = run_trial_study(sim.config(), options);

  write_metrics_markdown(std::cout, result.metrics);
  if (f.out.empty()) {
    return;
  }
  const std::filesystem::path dir(f.out);
  {
    std::ofstream out = open_output(dir / "metrics.csv");
    write_metrics_csv(out, result.metrics);
  }
  {
    std::ofstream out = open_output(dir / "metrics.md");
    write_metrics_markdown(out, result.metrics);
  }
  {
    std::ofstream out = open_output(dir / "records.csv");
    write_records_csv(out, result.records);
  }
  Json summary;
  summary["config"] = to_json(result.config);
  Json metrics = Json::array();
  for (std::size_t k = 0; k < result.metrics.size(); ++k) {
    Json m = to_json(result.metrics[k]);
    m["interval_half_width"] = result.histograms[k].interval_half_width;
    metrics.push_back(m);
    std::ofstream out =
        open_output(dir / ("histogram_" + to_string(result.histograms[k].method) + ".csv"));
    write_histogram_csv(out, result.histograms[k].histogram);
  }
  summary["metrics"] = metrics;
  std::ofstream out = open_output(dir / "summary.json");
  out << summary.dump(2) << '\n';
}

struct NoiseFlags {
  std::vector<std::string> inputs;
  std::string format = "csv_tr", left, right, bin_edges, out;
  double bin_width = 0.05;
  int min_count = 2;
};

void run_noise(const NoiseFlags &f) {
  std::vector<Residual> residuals;
  for (const std::string &path : f.inputs) {
    const TransmissionSpectrum s =
        ingest_spectrum(path, spectrum_format_from_string(f.format)).spectrum;
    const EdgeWindows w = default_windows(s);
    const WavelengthWindow left =
        f.left.empty() ? w.left : [&] { auto v = parse_list(f.left, 2, "--left"); return WavelengthWindow{v[0], v[1]}; }();
    const WavelengthWindow right =
        f.right.empty() ? w.right : [&] { auto v = parse_list(f.right, 2, "--right"); return WavelengthWindow{v[0], v[1]}; }();
    const auto r = baseline_residuals(s, left, right);
    residuals.insert(residuals.end(), r.begin(), r.end());
  }
  std::vector<double> edges;
  if (!f.bin_edges.empty()) {
    edges = parse_list(f.bin_edges, 0, "--bin-edges");
  } else {
    require(f.bin_width > 0.0, ErrorKind::invalid_argument, "--bin-width must be > 0");
    double lo = residuals.front().tr, hi = lo;
    for (const Residual &r : residuals) {
      lo = std::min(lo, r.tr);
      hi = std::max(hi, r.tr);
    }
    const double start = std::floor(lo / f.bin_width) * f.bin_width;
    for (double e = start; e < hi + f.bin_width; e += f.bin_width) {
      edges.push_back(e);
    }
  }
  const NoiseAnalysis analysis =
      analyse_noise(residuals, edges, static_cast<std::size_t>(f.min_count));
  Json out = to_json(analysis);
  for (std::size_t k = 0; k < analysis.binned.bins.size(); ++k) {
    const ResidualBin &bin = analysis.binned.bins[k];
    if (bin.residuals.size() >= 2 && analysis.fits[k].std > 0.0) {
      out["bins"][k]["ks_statistic"] =
          stats::ks_statistic_normal(bin.residuals, analysis.fits[k].mean, analysis.fits[k].std);
      out["bins"][k]["ks_critical_1pct"] = stats::ks_critical_value(bin.residuals.size(), 0.01);
    }
  }
  out["n_residuals"] = residuals.size();
  emit(out, f.out);
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Bragg-edge strain estimation"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file whose keys mirror the flags");
  app.fallthrough();
  app.require_subcommand(1);

  SimulationFlags sim_flags;
  std::string sim_out;
  CLI::App *simulate = app.add_subcommand("simulate", "Write simulated trial spectra");
  sim_flags.add(simulate);
  simulate->add_option("--out", sim_out, "Output directory")->required();

  FitFlags fit_flags;
  CLI::App *fit = app.add_subcommand("fit", "Estimate strain from one spectrum");
  fit->add_option("--input", fit_flags.input, "Spectrum CSV")->required();
  fit->add_option("--format", fit_flags.format, "csv_tr or csv_counts")->capture_default_str();
  fit->add_option("--method", fit_flags.method, "santisteban, tremsin, xcorr or gp")
      ->capture_default_str();
  fit->add_option("--edge-model", fit_flags.edge_model, "kropff or vogel")->capture_default_str();
  fit->add_option("--windows", fit_flags.windows,
                  "left_lo,left_hi,right_lo,right_hi,edge_lo,edge_hi (Angstrom)");
  fit->add_option("--reference", fit_flags.reference, "Stress-free spectrum CSV");
  fit->add_flag("--reference-noiseless", fit_flags.reference_noiseless,
                "GP: the reference is a noiseless profile");
  fit->add_option("--lambda0", fit_flags.lambda0, "Stress-free edge (Angstrom)")
      ->capture_default_str();
  fit->add_option("--zeta0", fit_flags.zeta0, "GP: stress-free gradient peak (Angstrom)");
  fit->add_option("--noise-scale", fit_flags.noise_scale,
                  "Noise level used to pick smoothing and crop defaults")
      ->capture_default_str();
  fit->add_option("--sg-window", fit_flags.sg_window, "xcorr: Savitzky-Golay window");
  fit->add_option("--sg-order", fit_flags.sg_order, "xcorr: Savitzky-Golay order");
  fit->add_option("--seed", fit_flags.seed, "GP sampling seed")->capture_default_str();
  fit->add_option("--noise-a", fit_flags.noise_a, "Variance law intercept for counts input");
  fit->add_option("--noise-b", fit_flags.noise_b, "Variance law slope for counts input");
  fit->add_option("--out", fit_flags.out, "JSON output file (stdout when absent)");
  fit_flags.gp.add(fit);

  SimulationFlags study_sim;
  StudyFlags study_flags;
  CLI::App *study = app.add_subcommand("trial-study", "Compare methods over simulated trials");
  study_sim.add(study);
  study->add_option("--methods", study_flags.methods, "Comma-separated methods")
      ->delimiter(',')
      ->capture_default_str();
  study->add_option("--workers", study_flags.workers, "Worker threads")->capture_default_str();
  study->add_option("--bins", study_flags.bins, "Histogram bins")->capture_default_str();
  study->add_option("--out", study_flags.out, "Output directory for tables and histograms");
  study_flags.gp.add(study);

  NoiseFlags noise_flags;
  CLI::App *noise = app.add_subcommand("noise-analysis", "Fit the noise variance law");
  noise->add_option("--inputs", noise_flags.inputs, "Spectrum CSVs")->delimiter(',')->required();
  noise->add_option("--format", noise_flags.format)->capture_default_str();
  noise->add_option("--left", noise_flags.left, "Left baseline window lo,hi");
  noise->add_option("--right", noise_flags.right, "Right baseline window lo,hi");
  noise->add_option("--bin-edges", noise_flags.bin_edges, "Comma-separated transmission edges");
  noise->add_option("--bin-width", noise_flags.bin_width)->capture_default_str();
  noise->add_option("--min-count", noise_flags.min_count)->capture_default_str();
  noise->add_option("--out", noise_flags.out, "JSON output file (stdout when absent)");

  std::string stack_in, stack_out;
  int p = 24;
  CLI::App *macro = app.add_subcommand("macro-bin", "Average p x p pixel blocks");
  macro->add_option("--input", stack_in, "Pixel stack CSV")->required();
  macro->add_option("--p", p, "Block size")->capture_default_str();
  macro->add_option("--out", stack_out, "Output stack CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << error_json("usage_error", e.what()).dump(2) << '\n';
    return 2;
  }

  try {
    if (*simulate) {
      run_simulate(sim_flags, sim_out);
    } else if (*fit) {
      run_fit(fit_flags);
    } else if (*study) {
      run_study(study_sim, study_flags);
    } else if (*noise) {
      run_noise(noise_flags);
    } else if (*macro) {
      const PixelStack out = macro_pixel_average(read_pixel_stack(stack_in), p);
      std::ofstream file = open_output(stack_out);
      write_pixel_stack(file, out);
      Json summary;
      summary["width"] = out.width;
      summary["height"] = out.height;
      summary["samples"] = out.wavelengths.size();
      std::cout << summary.dump(2) << '\n';
    }
  } catch (const Error &e) {
    std::cerr << error_json(std::string(to_string(e.kind())), e.what()).dump(2) << '\n';
    return 1;
  } catch (const std::exception &e) {
    std::cerr << error_json("internal_error", e.what()).dump(2) << '\n';
    return 1;
  }
  return 0;
}

#include <braggedge/harness.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace braggedge {

std::string to_string(Method method) {
  switch (method) {
  case Method::santisteban: return "santisteban";
  case Method::tremsin: return "tremsin";
  case Method::xcorr: return "xcorr";
  case Method::gp: return "gp";
  }
  return "unknown";
}

Method method_from_string(const std::string &name) {
  for (Method m : all_methods()) {
    if (to_string(m) == name) {
      return m;
    }
  }
  fail(ErrorKind::invalid_argument,
       "unknown method '" + name + "' (expected santisteban, tremsin, xcorr or gp)");
}

GPStrainOptions MethodSettings::study_gp_options() {
  GPStrainOptions out;
  out.fit.kernels = {KernelKind::squared_exponential};
  return out;
}

StrainEstimate run_method(Method method, const Trial &trial, const TrialConfig &config,
                          const MethodSettings &settings) {
  const EdgeWindows windows = default_windows(trial.spectrum);
  switch (method) {
  case Method::santisteban:
    return fit_santisteban(trial.spectrum, windows, settings.edge_model, config.lambda0,
                           settings.lsq)
        .strain;
  case Method::tremsin: {
    const TremsinCrop crop =
        settings.tremsin_crop.value_or(tremsin_crop_for_noise(config.noise_scale));
    return fit_tremsin_cropped(trial.spectrum, windows.edge, config.lambda0, crop, settings.lsq)
        .strain;
  }
  case Method::xcorr: {
    XcorrOptions options = settings.xcorr;
    options.sg = settings.sg.value_or(sg_defaults_for_noise(config.noise_scale));
    return fit_xcorr_strain(trial.spectrum, trial.reference, config.lambda0, options).strain;
  }
  case Method::gp: {
    Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(trial.group),
                          static_cast<std::uint64_t>(trial.trial), settings.gp_stream);
    if (trial.noisy_reference) {
      return gp_strain(trial.spectrum, *trial.noisy_reference, windows, settings.gp, rng).strain;
    }
    return gp_strain_profile(trial.spectrum, trial.reference, windows, settings.gp, rng).strain;
  }
  }
  fail(ErrorKind::invalid_argument, "run_method: unknown method");
}

TrialMetrics compute_metrics(Method method, const std::vector<TrialRecord> &records) {
  TrialMetrics m;
  m.method = method;
  std::vector<const TrialRecord *> ok;
  for (const TrialRecord &r : records) {
    if (r.method != method) {
      continue;
    }
    if (!r.ok) {
      ++m.n_failures;
      continue;
    }
    ok.push_back(&r);
  }
  m.n_trials = static_cast<int>(ok.size());
  if (ok.empty()) {
    return m;
  }
  const double n = static_cast<double>(ok.size());
  int covered = 0;
  double max_predicted = 0.0;
  for (const TrialRecord *r : ok) {
    m.error_mean += r->error;
    m.mean_magnitude += std::abs(r->error);
    m.maximum = std::max(m.maximum, std::abs(r->error));
    m.mean_predicted_std += r->predicted_std;
    max_predicted = std::max(max_predicted, r->predicted_std);
    covered += std::abs(r->error) <= 2.0 * r->predicted_std ? 1 : 0;
    m.n_suspicious += r->suspicious ? 1 : 0;
  }
  m.error_mean /= n;
  m.mean_magnitude /= n;
  m.mean_predicted_std /= n;
  double ss = 0.0;
  for (const TrialRecord *r : ok) {
    ss += (r->error - m.error_mean) * (r->error - m.error_mean);
  }
  m.error_std = std::sqrt(ss / n);
  m.coverage_2sigma = covered / n;
  m.predicted_std_blowup = !std::isfinite(max_predicted) || max_predicted > 100.0 * m.error_std;
  return m;
}

StudyResult run_trial_study(const TrialConfig &config, const StudyOptions &options) {
  config.validate();
  require(!options.methods.empty(), ErrorKind::invalid_argument,
          "run_trial_study: no methods selected");
  require(options.workers >= 1, ErrorKind::invalid_argument,
          "run_trial_study: workers must be >= 1");

  const int total = config.total_trials();
  const std::size_t per_trial = options.methods.size();
  std::vector<TrialRecord> records(static_cast<std::size_t>(total) * per_trial);

  std::atomic<int> next{0};
  auto work = [&] {
    for (int t = next.fetch_add(1); t < total; t = next.fetch_add(1)) {
      const int group = t / config.trials_per_group;
      const int index = t % config.trials_per_group;
      const Trial trial = generate_trial(config, group, index);
      for (std::size_t k = 0; k < per_trial; ++k) {
        TrialRecord &r = records[static_cast<std::size_t>(t) * per_trial + k];
        r.group = group;
        r.trial = index;
        r.method = options.methods[k];
        r.true_strain = trial.truth.strain;
        try {
          const StrainEstimate e = run_method(r.method, trial, config, options.settings);
          r.error = (e.strain_mean - trial.truth.strain) * micro_strain;
          r.predicted_std = e.strain_std * micro_strain;
          r.suspicious = e.suspicious;
          r.bimodal = e.bimodal;
          r.ok = std::isfinite(r.error);
          if (!r.ok) {
            r.failure = "non-finite estimate";
          }
        } catch (const std::exception &e) {
          r.ok = false;
          r.failure = e.what();
        }
      }
    }
  };

  const int workers = std::min(options.workers, std::max(total, 1));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back(work);
    }
  }

  StudyResult out;
  out.config = config;
  out.records = std::move(records);
  for (Method method : options.methods) {
    const TrialMetrics m = compute_metrics(method, out.records);
    out.metrics.push_back(m);
    std::vector<double> errors;
    for (const TrialRecord &r : out.records) {
      if (r.method == method && r.ok) {
        errors.push_back(r.error);
      }
    }
    MethodHistogram h;
    h.method = method;
    h.histogram = stats::histogram(
        Eigen::Map<const Eigen::VectorXd>(errors.data(), static_cast<Eigen::Index>(errors.size())),
        options.histogram_bins, 0.0, m.mean_predicted_std);
    h.interval_half_width = 2.0 * m.mean_predicted_std;
    out.histograms.push_back(std::move(h));
  }
  return out;
}

// ---------------------------------------------------------------------------

void PixelStack::validate() const {
  require(width >= 1 && height >= 1, ErrorKind::invalid_argument,
          "pixel stack: width and height must be >= 1");
  require(values.rows() == static_cast<Eigen::Index>(width) * height,
          ErrorKind::invalid_argument, "pixel stack: expected width * height spectra");
  require(values.cols() == wavelengths.size(), ErrorKind::invalid_argument,
          "pixel stack: spectra and wavelength grid differ in length");
}

TransmissionSpectrum PixelStack::pixel(int x, int y) const {
  require(x >= 0 && x < width && y >= 0 && y < height, ErrorKind::invalid_argument,
          "pixel stack: pixel out of range");
  return make_spectrum(wavelengths, values.row(static_cast<Eigen::Index>(y) * width + x).transpose());
}

PixelStack macro_pixel_average(const PixelStack &stack, int p) {
  stack.validate();
  require(p >= 1, ErrorKind::invalid_argument, "macro_pixel_average: p must be >= 1");
  PixelStack out;
  out.width = (stack.width + p - 1) / p;
  out.height = (stack.height + p - 1) / p;
  out.wavelengths = stack.wavelengths;
  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out.width) * out.height,
                                     stack.wavelengths.size());
  for (int by = 0; by < out.height; ++by) {
    for (int bx = 0; bx < out.width; ++bx) {
      const int x_end = std::min(stack.width, (bx + 1) * p);
      const int y_end = std::min(stack.height, (by + 1) * p);
      auto row = out.values.row(static_cast<Eigen::Index>(by) * out.width + bx);
      int count = 0;
      for (int y = by * p; y < y_end; ++y) {
        for (int x = bx * p; x < x_end; ++x) {
          row += stack.values.row(static_cast<Eigen::Index>(y) * stack.width + x);
          ++count;
        }
      }
      row /= static_cast<double>(count);
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cells.push_back(cell);
  }
  return cells;
}

double parse_number(const std::string &cell, const std::string &where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception &) {
    fail(ErrorKind::parse_error, where + ": '" + cell + "' is not a number");
  }
  while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) {
    ++used;
  }
  require(used == cell.size(), ErrorKind::parse_error, where + ": '" + cell + "' is not a number");
  return v;
}

} // namespace

PixelStack read_pixel_stack(const std::filesystem::path &path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::parse_error, "cannot open '" + path.string() + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::parse_error,
          path.string() + ": empty file");
  const std::vector<std::string> header = split_csv(line);
  require(header.size() >= 3, ErrorKind::parse_error,
          path.string() + ":1: expected x,y and at least one wavelength");
  const auto n = static_cast<Eigen::Index>(header.size() - 2);
  Eigen::VectorXd wavelengths(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    wavelengths(k) = parse_number(header[static_cast<std::size_t>(k) + 2], path.string() + ":1");
  }

  std::vector<std::pair<int, int>> where;
  std::vector<Eigen::VectorXd> rows;
  int line_no = 1;
  int width = 0, height = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const std::string at = path.string() + ":" + std::to_string(line_no);
    const std::vector<std::string> cells = split_csv(line);
    require(cells.size() == header.size(), ErrorKind::parse_error, at + ": wrong column count");
    const int x = static_cast<int>(parse_number(cells[0], at));
    const int y = static_cast<int>(parse_number(cells[1], at));
    require(x >= 0 && y >= 0, ErrorKind::parse_error, at + ": negative pixel index");
    Eigen::VectorXd v(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      v(k) = parse_number(cells[static_cast<std::size_t>(k) + 2], at);
    }
    where.emplace_back(x, y);
    rows.push_back(std::move(v));
    width = std::max(width, x + 1);
    height = std::max(height, y + 1);
  }
  PixelStack stack;
  stack.width = width;
  stack.height = height;
  stack.wavelengths = std::move(wavelengths);
  require(static_cast<Eigen::Index>(rows.size()) == static_cast<Eigen::Index>(width) * height,
          ErrorKind::parse_error, path.string() + ": expected one row per pixel of a full grid");
  stack.values.resize(static_cast<Eigen::Index>(width) * height, n);
  std::vector<bool> seen(rows.size(), false);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto index = static_cast<std::size_t>(where[k].second) * static_cast<std::size_t>(width) +
                       static_cast<std::size_t>(where[k].first);
    require(!seen[index], ErrorKind::parse_error,
            path.string() + ": pixel (" + std::to_string(where[k].first) + ", " +
                std::to_string(where[k].second) + ") listed twice");
    seen[index] = true;
    stack.values.row(static_cast<Eigen::Index>(index)) = rows[k].transpose();
  }
  stack.validate();
  return stack;
}

SpectrumFormat spectrum_format_from_string(const std::string &name) {
  if (name == "csv_tr") {
    return SpectrumFormat::csv_tr;
  }
  if (name == "csv_counts") {
    return SpectrumFormat::csv_counts;
  }
  fail(ErrorKind::invalid_argument,
       "unknown spectrum format '" + name + "' (expected csv_tr or csv_counts)");
}

namespace {

bool parse_fields(const std::string &line, std::vector<double> &fields) {
  fields.clear();
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
      return false;
    }
    const auto last = cell.find_last_not_of(" \t\r");
    const std::string trimmed = cell.substr(first, last - first + 1);
    std::size_t used = 0;
    try {
      fields.push_back(std::stod(trimmed, &used));
    } catch (const std::exception &) {
      return false;
    }
    if (used != trimmed.size()) {
      return false;
    }
  }
  return !fields.empty();
}

} // namespace

IngestResult ingest_spectrum(const std::filesystem::path &path, SpectrumFormat format,
                             const std::optional<NoiseModel> &noise) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::parse_error, "cannot open '" + path.string() + "'");

  const std::string where = path.string() + ":";
  std::vector<double> lambda, value, extra;
  bool has_extra = false;
  IngestResult out;
  std::string line;
  std::vector<double> fields;
  int line_no = 0;
  bool seen_data = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') {
      continue;
    }
    if (!parse_fields(line, fields)) {
      if (!seen_data) {
        seen_data = true; // header
        continue;
      }
      fail(ErrorKind::parse_error, where + std::to_string(line_no) + ": not a numeric CSV row");
    }
    seen_data = true;
    if (format == SpectrumFormat::csv_tr) {
      require(fields.size() == 2 || fields.size() == 3, ErrorKind::parse_error,
              where + std::to_string(line_no) + ": expected lambda, transmission[, noise_std]");
      if (!lambda.empty()) {
        require(has_extra == (fields.size() == 3), ErrorKind::parse_error,
                where + std::to_string(line_no) + ": inconsistent column count");
      }
      has_extra = fields.size() == 3;
      if (has_extra) {
        extra.push_back(fields[2]);
      }
    } else {
      require(fields.size() == 3, ErrorKind::parse_error,
              where + std::to_string(line_no) + ": expected lambda, I, I0");
      if (fields[2] == 0.0) {
        ++out.dropped_rows;
        continue;
      }
      fields[1] /= fields[2];
    }
    require(lambda.empty() || fields[0] > lambda.back(), ErrorKind::parse_error,
            where + std::to_string(line_no) + ": wavelengths must be strictly increasing");
    lambda.push_back(fields[0]);
    value.push_back(fields[1]);
  }
  require(!lambda.empty(), ErrorKind::parse_error, where + " no data rows");

  const auto n = static_cast<Eigen::Index>(lambda.size());
  Eigen::VectorXd l = Eigen::Map<Eigen::VectorXd>(lambda.data(), n);
  Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(value.data(), n);
  std::optional<Eigen::VectorXd> sd;
  if (has_extra) {
    sd = Eigen::Map<Eigen::VectorXd>(extra.data(), n);
  } else if (noise) {
    sd = v.unaryExpr([&](double tr) { return noise_std_at(*noise, tr); });
  }
  out.spectrum = make_spectrum(std::move(l), std::move(v), std::move(sd));
  return out;
}

NoiseAnalysis analyse_spectra_noise(const std::vector<TransmissionSpectrum> &spectra,
                                    const WavelengthWindow &left, const WavelengthWindow &right,
                                    const std::vector<double> &bin_edges, std::size_t min_count) {
  require(!spectra.empty(), ErrorKind::invalid_argument, "analyse_spectra_noise: no spectra");
  std::vector<Residual> residuals;
  for (const TransmissionSpectrum &s : spectra) {
    const std::vector<Residual> r = baseline_residuals(s, left, right);
    residuals.insert(residuals.end(), r.begin(), r.end());
  }
  return analyse_noise(residuals, bin_edges, min_count);
}

} // namespace braggedge

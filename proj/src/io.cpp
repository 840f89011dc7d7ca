#include <braggedge/io.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace braggedge {

namespace {

Json number(double v) {
  // JSON has no NaN or infinity; keep them visible as strings.
  if (std::isfinite(v)) {
    return v;
  }
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

} // namespace

std::string exact(double value) {
  char buf[64];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) {
      break;
    }
  }
  return buf;
}

Json to_json(const StrainEstimate &e) {
  Json out;
  out["method"] = e.method;
  out["strain_mean"] = number(e.strain_mean);
  out["strain_std"] = number(e.strain_std);
  out["strain_mean_micro"] = number(e.strain_mean * micro_strain);
  out["strain_std_micro"] = number(e.strain_std * micro_strain);
  out["suspicious"] = e.suspicious;
  out["bimodal"] = e.bimodal;
  if (e.samples) {
    out["n_samples"] = e.samples->size();
  }
  return out;
}

Json to_json(const FitResult &fit) {
  Json out;
  Json params = Json::object();
  Json stds = Json::object();
  for (std::size_t k = 0; k < fit.names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    params[fit.names[k]] = number(fit.params(i));
    if (fit.covariance.rows() > i) {
      stds[fit.names[k]] = number(std::sqrt(std::max(fit.covariance(i, i), 0.0)));
    }
  }
  out["params"] = params;
  out["std"] = stds;
  out["covariance_available"] = fit.covariance_available;
  out["weighted_sse"] = number(fit.residual_norm);
  out["converged"] = fit.converged;
  out["iterations"] = fit.iterations;
  out["evaluations"] = fit.evaluations;
  return out;
}

Json to_json(const NoiseModel &model) {
  Json out;
  out["a"] = number(model.a);
  out["b"] = number(model.b);
  return out;
}

Json to_json(const Baselines &b) {
  Json out;
  out["a0"] = number(b.a0);
  out["b0"] = number(b.b0);
  out["a_hkl"] = number(b.a_hkl);
  out["b_hkl"] = number(b.b_hkl);
  return out;
}

Json to_json(const EdgeParams &p) {
  Json out;
  out["lambda_hkl"] = number(p.shape.lambda_hkl);
  out["sigma_B"] = number(p.shape.sigma_B);
  out["tau"] = number(p.shape.tau);
  out["baselines"] = to_json(p.baselines);
  return out;
}

Json to_json(const TrialMetrics &m) {
  Json out;
  out["method"] = to_string(m.method);
  out["error_mean"] = number(m.error_mean);
  out["mean_magnitude"] = number(m.mean_magnitude);
  out["maximum"] = number(m.maximum);
  out["error_std"] = number(m.error_std);
  out["mean_predicted_std"] = number(m.mean_predicted_std);
  out["coverage_2sigma"] = number(m.coverage_2sigma);
  out["n_trials"] = m.n_trials;
  out["n_failures"] = m.n_failures;
  out["n_suspicious"] = m.n_suspicious;
  out["predicted_std_blowup"] = m.predicted_std_blowup;
  return out;
}

Json to_json(const TrialConfig &c) {
  Json out;
  out["n_groups"] = c.n_groups;
  out["trials_per_group"] = c.trials_per_group;
  out["sigma_B_range"] = {c.sigma_B_range[0], c.sigma_B_range[1]};
  out["tau_range"] = {c.tau_range[0], c.tau_range[1]};
  out["strain_range"] = {c.strain_range[0], c.strain_range[1]};
  out["noise_scale"] = c.noise_scale;
  out["lambda0"] = c.lambda0;
  out["grid"] = {{"low", c.grid.low}, {"high", c.grid.high}, {"samples", c.grid.samples}};
  out["baselines"] = to_json(c.baselines);
  out["noise_model"] = to_json(c.noise_model);
  out["seed"] = c.seed;
  out["noisy_reference"] = c.noisy_reference;
  return out;
}

Json to_json(const NoiseAnalysis &analysis) {
  Json out;
  out["model"] = to_json(analysis.model);
  Json bins = Json::array();
  for (std::size_t k = 0; k < analysis.binned.bins.size(); ++k) {
    const ResidualBin &bin = analysis.binned.bins[k];
    Json b;
    b["low"] = bin.low;
    b["high"] = bin.high;
    b["count"] = bin.residuals.size();
    if (k < analysis.fits.size()) {
      b["mean"] = number(analysis.fits[k].mean);
      b["std"] = number(analysis.fits[k].std);
    }
    bins.push_back(b);
  }
  out["bins"] = bins;
  out["dropped"] = analysis.binned.dropped;
  return out;
}

Json to_json(const HyperparameterResult &hyper) {
  Json out;
  out["kernel"] = to_string(hyper.kernel.kind);
  out["sigma_f"] = number(hyper.kernel.sigma_f);
  out["l"] = number(hyper.kernel.l);
  out["noise_scale"] = number(hyper.noise_scale);
  out["log_marginal_likelihood"] = number(hyper.objective);
  Json starts = Json::array();
  for (const StartDiagnostic &s : hyper.starts) {
    starts.push_back({{"kernel", to_string(s.kind)},
                      {"start", s.start},
                      {"ok", s.ok},
                      {"converged", s.converged},
                      {"objective", number(s.objective)},
                      {"sigma_f", number(s.final.sigma_f)},
                      {"l", number(s.final.l)},
                      {"message", s.message}});
  }
  out["starts"] = starts;
  return out;
}

Json error_json(const std::string &kind, const std::string &message) {
  Json out;
  out["error"] = {{"kind", kind}, {"message", message}};
  return out;
}

void write_spectrum_csv(std::ostream &out, const TransmissionSpectrum &s) {
  out << "lambda,transmission,noise_std\n";
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    out << exact(s.wavelengths(i)) << ',' << exact(s.values(i)) << ',';
    if (s.noise_std) {
      out << exact((*s.noise_std)(i));
    }
    out << '\n';
  }
}

namespace {

struct Row {
  const char *label;
  double TrialMetrics::*field;
};

constexpr Row metric_rows[] = {
    {"error_mean", &TrialMetrics::error_mean},
    {"mean_magnitude", &TrialMetrics::mean_magnitude},
    {"maximum", &TrialMetrics::maximum},
    {"error_std", &TrialMetrics::error_std},
    {"mean_predicted_std", &TrialMetrics::mean_predicted_std},
    {"coverage_2sigma", &TrialMetrics::coverage_2sigma},
};

} // namespace

void write_metrics_csv(std::ostream &out, const std::vector<TrialMetrics> &metrics) {
  out << "metric";
  for (const TrialMetrics &m : metrics) {
    out << ',' << to_string(m.method);
  }
  out << '\n';
  for (const Row &row : metric_rows) {
    out << row.label;
    for (const TrialMetrics &m : metrics) {
      out << ',' << exact(m.*row.field);
    }
    out << '\n';
  }
  auto count_row = [&](const char *label, auto get) {
    out << label;
    for (const TrialMetrics &m : metrics) {
      out << ',' << get(m);
    }
    out << '\n';
  };
  count_row("n_trials", [](const TrialMetrics &m) { return m.n_trials; });
  count_row("n_failures", [](const TrialMetrics &m) { return m.n_failures; });
  count_row("n_suspicious", [](const TrialMetrics &m) { return m.n_suspicious; });
  count_row("predicted_std_blowup",
            [](const TrialMetrics &m) { return m.predicted_std_blowup ? 1 : 0; });
}

void write_metrics_markdown(std::ostream &out, const std::vector<TrialMetrics> &metrics) {
  static const char *labels[] = {"Error mean", "Mean magnitude", "Maximum",
                                 "Standard deviation", "Mean predicted std", "2-sigma coverage"};
  out << "| micro-strain |";
  for (const TrialMetrics &m : metrics) {
    out << ' ' << to_string(m.method) << " |";
  }
  out << "\n|---|";
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    out << "---:|";
  }
  out << '\n';
  for (std::size_t r = 0; r < std::size(metric_rows); ++r) {
    out << "| " << labels[r] << " |";
    for (const TrialMetrics &m : metrics) {
      const double v = m.*metric_rows[r].field;
      out << ' ' << (std::abs(v) >= 1e6 ? exact(v) : fixed2(v));
      if (r == 4 && m.predicted_std_blowup) {
        out << " (!)";
      }
      out << " |";
    }
    out << '\n';
  }
  out << "| Trials / failures |";
  for (const TrialMetrics &m : metrics) {
    out << ' ' << m.n_trials << " / " << m.n_failures << " |";
  }
  out << '\n';
}

void write_histogram_csv(std::ostream &out, const stats::Histogram &h) {
  out << "bin_center,count,gaussian_overlay\n";
  for (Eigen::Index b = 0; b < h.centers.size(); ++b) {
    out << exact(h.centers(b)) << ',' << exact(h.counts(b)) << ',' << exact(h.overlay(b)) << '\n';
  }
}

void write_records_csv(std::ostream &out, const std::vector<TrialRecord> &records) {
  out << "group,trial,method,true_strain,ok,error,predicted_std,suspicious,bimodal,failure\n";
  for (const TrialRecord &r : records) {
    std::string failure = r.failure;
    for (char &c : failure) {
      if (c == ',' || c == '\n' || c == '"') {
        c = ';';
      }
    }
    out << r.group << ',' << r.trial << ',' << to_string(r.method) << ',' << exact(r.true_strain)
        << ',' << (r.ok ? 1 : 0) << ',' << exact(r.error) << ',' << exact(r.predicted_std) << ','
        << (r.suspicious ? 1 : 0) << ',' << (r.bimodal ? 1 : 0) << ',' << failure << '\n';
  }
}

void write_pixel_stack(std::ostream &out, const PixelStack &stack) {
  stack.validate();
  out << "x,y";
  for (double l : stack.wavelengths) {
    out << ',' << exact(l);
  }
  out << '\n';
  for (int y = 0; y < stack.height; ++y) {
    for (int x = 0; x < stack.width; ++x) {
      out << x << ',' << y;
      for (double v : stack.values.row(static_cast<Eigen::Index>(y) * stack.width + x)) {
        out << ',' << exact(v);
      }
      out << '\n';
    }
  }
}

std::ofstream open_output(const std::filesystem::path &path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  require(out.good(), ErrorKind::invalid_argument, "cannot write '" + path.string() + "'");
  return out;
}

} // namespace braggedge

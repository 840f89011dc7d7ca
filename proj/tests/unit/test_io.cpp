#include <braggedge/io.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

using namespace braggedge;

TEST(Exact, ReadsBackBitIdentical) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 10000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(i % 40) - 20);
    EXPECT_EQ(std::strtod(exact(v).c_str(), nullptr), v);
  }
  EXPECT_EQ(exact(0.1), "0.1");
  EXPECT_EQ(exact(4.05), "4.05");
}

TEST(ErrorJson, Layout) {
  const Json j = error_json("parse_error", "bad row");
  EXPECT_EQ(j.dump(), R"({"error":{"kind":"parse_error","message":"bad row"}})");
}

TEST(Json, NonFiniteWrittenAsStrings) {
  StrainEstimate e;
  e.strain_mean = std::numeric_limits<double>::quiet_NaN();
  e.strain_std = std::numeric_limits<double>::infinity();
  e.method = "tremsin";
  const Json j = to_json(e);
  EXPECT_EQ(j["strain_mean"], "nan");
  EXPECT_EQ(j["strain_std"], "inf");
  EXPECT_EQ(j["method"], "tremsin");
  EXPECT_NO_THROW((void)j.dump());
}

TEST(Json, ConfigRoundTripsNumbers) {
  TrialConfig c;
  c.seed = 42;
  const Json j = to_json(c);
  EXPECT_EQ(j["seed"], 42);
  EXPECT_EQ(j["grid"]["samples"], 512);
  EXPECT_EQ(j["noise_model"]["a"].get<double>(), c.noise_model.a);
  EXPECT_EQ(Json::parse(j.dump())["baselines"]["b_hkl"].get<double>(), c.baselines.b_hkl);
}

TEST(SpectrumCsv, RoundTripThroughIngest) {
  const Eigen::VectorXd l = uniform_grid(3.8, 4.3, 7);
  const auto s = make_spectrum(l, l.unaryExpr([](double x) { return std::sin(x); }),
                               Eigen::VectorXd::Constant(7, 1.0 / 3.0));
  const auto path = std::filesystem::temp_directory_path() / "braggedge_io_roundtrip.csv";
  {
    std::ofstream out(path);
    write_spectrum_csv(out, s);
  }
  const IngestResult back = ingest_spectrum(path, SpectrumFormat::csv_tr);
  EXPECT_EQ(back.spectrum.wavelengths, s.wavelengths);
  EXPECT_EQ(back.spectrum.values, s.values);
  EXPECT_EQ(*back.spectrum.noise_std, *s.noise_std);
}

TEST(MetricsCsv, Layout) {
  TrialMetrics a, b;
  a.method = Method::xcorr;
  a.error_std = 62.5;
  a.n_trials = 10;
  b.method = Method::gp;
  b.predicted_std_blowup = true;
  std::ostringstream out;
  write_metrics_csv(out, {a, b});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "metric,xcorr,gp");
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 10u);
  EXPECT_EQ(lines[3], "error_std,62.5,0");
  EXPECT_EQ(lines[6], "n_trials,10,0");
  EXPECT_EQ(lines[9], "predicted_std_blowup,0,1");
}

TEST(MetricsMarkdown, FlagsBlowup) {
  TrialMetrics a;
  a.method = Method::tremsin;
  a.mean_predicted_std = 1.5e7;
  a.predicted_std_blowup = true;
  std::ostringstream out;
  write_metrics_markdown(out, {a});
  EXPECT_NE(out.str().find("| tremsin |"), std::string::npos);
  EXPECT_NE(out.str().find("15000000 (!)"), std::string::npos) << out.str();
}

TEST(RecordsCsv, SanitizesFailureText) {
  TrialRecord r;
  r.method = Method::santisteban;
  r.failure = "step 1, \"right\"\nbaseline";
  std::ostringstream out;
  write_records_csv(out, {r});
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_NE(text.find("step 1; ;right;;baseline"), std::string::npos) << text;
}

TEST(HistogramCsv, Columns) {
  const stats::Histogram h = stats::histogram(Eigen::Vector3d(0.0, 1.0, 2.0), 2, 1.0, 1.0);
  std::ostringstream out;
  write_histogram_csv(out, h);
  EXPECT_EQ(out.str().substr(0, 33), "bin_center,count,gaussian_overlay");
  EXPECT_EQ(h.counts.sum(), 3.0);
}

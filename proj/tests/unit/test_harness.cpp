#include <braggedge/harness.hpp>
#include <braggedge/io.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace braggedge;

namespace {

std::filesystem::path scratch(const std::string &name) {
  const auto dir = std::filesystem::temp_directory_path() / "braggedge_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::filesystem::path write_file(const std::string &name, const std::string &text) {
  const auto path = scratch(name);
  std::ofstream(path) << text;
  return path;
}

TrialRecord record(Method m, double error, double predicted, bool ok = true) {
  TrialRecord r;
  r.method = m;
  r.error = error;
  r.predicted_std = predicted;
  r.ok = ok;
  return r;
}

PixelStack stack_of(int width, int height, Eigen::Index samples) {
  PixelStack s;
  s.width = width;
  s.height = height;
  s.wavelengths = uniform_grid(3.8, 4.3, samples);
  s.values = Eigen::MatrixXd::Zero(width * height, samples);
  return s;
}

} // namespace

TEST(Metrics, HandComputedValues) {
  const std::vector<TrialRecord> r{record(Method::xcorr, 10.0, 5.0), record(Method::xcorr, -30.0, 10.0),
                                   record(Method::xcorr, 20.0, 15.0),
                                   record(Method::xcorr, 0.0, 0.0, false),
                                   record(Method::gp, 1e6, 1.0)};
  const TrialMetrics m = compute_metrics(Method::xcorr, r);
  EXPECT_EQ(m.n_trials, 3);
  EXPECT_EQ(m.n_failures, 1);
  EXPECT_DOUBLE_EQ(m.error_mean, 0.0);
  EXPECT_DOUBLE_EQ(m.mean_magnitude, 20.0);
  EXPECT_DOUBLE_EQ(m.maximum, 30.0);
  EXPECT_DOUBLE_EQ(m.error_std, std::sqrt(1400.0 / 3.0));
  EXPECT_DOUBLE_EQ(m.mean_predicted_std, 10.0);
  EXPECT_DOUBLE_EQ(m.coverage_2sigma, 2.0 / 3.0);
  EXPECT_FALSE(m.predicted_std_blowup);
}

TEST(Metrics, BlowupFlag) {
  const std::vector<TrialRecord> r{record(Method::tremsin, 1.0, 1.0), record(Method::tremsin, -1.0, 1e4)};
  EXPECT_TRUE(compute_metrics(Method::tremsin, r).predicted_std_blowup);
}

TEST(TrialStudy, InvariantsAndRecordsReproduceMetrics) {
  TrialConfig c;
  c.n_groups = 4;
  c.trials_per_group = 3;
  StudyOptions o;
  o.methods = {Method::santisteban, Method::tremsin, Method::xcorr};
  const StudyResult s = run_trial_study(c, o);
  ASSERT_EQ(s.records.size(), 36u);
  for (const TrialMetrics &m : s.metrics) {
    EXPECT_EQ(m.n_trials + m.n_failures, 12);
    EXPECT_LE(std::abs(m.error_mean), m.mean_magnitude + 1e-12);
    EXPECT_LE(m.mean_magnitude, m.maximum + 1e-12);
    EXPECT_LE(m.error_std, m.maximum + 1e-12);
    EXPECT_GE(m.coverage_2sigma, 0.0);
    EXPECT_LE(m.coverage_2sigma, 1.0);
    const TrialMetrics again = compute_metrics(m.method, s.records);
    EXPECT_EQ(again.error_std, m.error_std);
    EXPECT_EQ(again.mean_predicted_std, m.mean_predicted_std);
  }
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    EXPECT_EQ(s.records[i].group, static_cast<int>(i / 9));
    EXPECT_EQ(s.records[i].trial, static_cast<int>(i / 3 % 3));
  }
}

TEST(TrialStudy, WorkerCountDoesNotChangeResults) {
  TrialConfig c;
  c.n_groups = 3;
  c.trials_per_group = 2;
  c.seed = 17;
  StudyOptions o;
  o.methods = {Method::santisteban, Method::xcorr, Method::gp};
  const StudyResult serial = run_trial_study(c, o);
  o.workers = 4;
  const StudyResult parallel = run_trial_study(c, o);
  ASSERT_EQ(serial.records.size(), parallel.records.size());
  for (std::size_t i = 0; i < serial.records.size(); ++i) {
    EXPECT_EQ(serial.records[i].error, parallel.records[i].error);
    EXPECT_EQ(serial.records[i].predicted_std, parallel.records[i].predicted_std);
  }
  std::ostringstream a, b;
  write_metrics_csv(a, serial.metrics);
  write_metrics_csv(b, parallel.metrics);
  EXPECT_EQ(a.str(), b.str());
}

TEST(TrialStudy, RejectsBadOptions) {
  StudyOptions o;
  o.workers = 0;
  EXPECT_THROW(run_trial_study(TrialConfig{}, o), Error);
  o.workers = 1;
  o.methods.clear();
  EXPECT_THROW(run_trial_study(TrialConfig{}, o), Error);
}

TEST(MacroPixel, UnitBlockIsIdentity) {
  PixelStack s = stack_of(3, 2, 4);
  s.values.setRandom();
  const PixelStack out = macro_pixel_average(s, 1);
  EXPECT_EQ(out.width, 3);
  EXPECT_EQ(out.height, 2);
  EXPECT_EQ(out.values, s.values);
}

TEST(MacroPixel, ConstantAndPartialBlocks) {
  PixelStack s = stack_of(5, 3, 2);
  s.values.setConstant(0.6);
  const PixelStack c = macro_pixel_average(s, 2);
  EXPECT_EQ(c.width, 3);
  EXPECT_EQ(c.height, 2);
  EXPECT_LT((c.values.array() - 0.6).abs().maxCoeff(), 1e-15);

  // Pixel value = x + 10 y: the partial corner block holds only (4, 2).
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 5; ++x) {
      s.values.row(y * 5 + x).setConstant(x + 10.0 * y);
    }
  }
  const PixelStack p = macro_pixel_average(s, 2);
  EXPECT_DOUBLE_EQ(p.values(0, 0), (0 + 1 + 10 + 11) / 4.0);
  EXPECT_DOUBLE_EQ(p.values(2, 0), (4 + 14) / 2.0);
  EXPECT_DOUBLE_EQ(p.values(5, 1), 24.0);
}

TEST(MacroPixel, GrandMeanPreservedForWholeBlocks) {
  PixelStack s = stack_of(6, 4, 3);
  s.values.setRandom();
  const PixelStack out = macro_pixel_average(s, 2);
  EXPECT_NEAR(out.values.mean(), s.values.mean(), 1e-14);
}

TEST(MacroPixel, IndependentNoiseShrinksByBlockSide) {
  PixelStack s = stack_of(48, 48, 2500);
  Rng rng(12);
  std::normal_distribution<double> normal(0.5, 0.02);
  for (Eigen::Index i = 0; i < s.values.size(); ++i) {
    s.values.data()[i] = normal(rng);
  }
  const PixelStack out = macro_pixel_average(s, 24);
  ASSERT_EQ(out.width * out.height, 4);
  for (int k = 0; k < 4; ++k) {
    const Eigen::VectorXd v = out.values.row(k).transpose();
    const double sd = std::sqrt((v.array() - v.mean()).square().sum() / (v.size() - 1.0));
    EXPECT_NEAR(sd / 0.02, 1.0 / 24.0, 0.1 / 24.0);
  }
}

TEST(MacroPixel, Validation) {
  EXPECT_THROW(macro_pixel_average(stack_of(2, 2, 3), 0), Error);
  PixelStack bad = stack_of(2, 2, 3);
  bad.values.resize(3, 3);
  EXPECT_THROW(macro_pixel_average(bad, 1), Error);
}

TEST(PixelStackFile, RoundTrip) {
  PixelStack s = stack_of(3, 2, 5);
  s.values.setRandom();
  const auto path = scratch("stack.csv");
  {
    std::ofstream out(path);
    write_pixel_stack(out, s);
  }
  const PixelStack back = read_pixel_stack(path);
  EXPECT_EQ(back.width, 3);
  EXPECT_EQ(back.height, 2);
  EXPECT_EQ(back.wavelengths, s.wavelengths);
  EXPECT_EQ(back.values, s.values);
}

TEST(Ingest, TransmissionColumns) {
  const auto path = write_file("tr.csv", "lambda,tr\n4.0,0.5\n4.1,0.55\n4.2,0.6\n");
  const IngestResult r = ingest_spectrum(path, SpectrumFormat::csv_tr);
  EXPECT_EQ(r.spectrum.size(), 3);
  EXPECT_DOUBLE_EQ(r.spectrum.values(1), 0.55);
  EXPECT_FALSE(r.spectrum.noise_std.has_value());
  const IngestResult with_noise = ingest_spectrum(path, SpectrumFormat::csv_tr, default_noise_model());
  ASSERT_TRUE(with_noise.spectrum.noise_std.has_value());
  EXPECT_DOUBLE_EQ((*with_noise.spectrum.noise_std)(0), noise_std_at(default_noise_model(), 0.5));
}

TEST(Ingest, CountsAndDroppedRows) {
  const auto path = write_file("counts.csv", "# open beam run\n4.0,50,100\n4.1,70,0\n4.2,80,80\n");
  const IngestResult r = ingest_spectrum(path, SpectrumFormat::csv_counts);
  EXPECT_EQ(r.dropped_rows, 1);
  EXPECT_EQ(r.spectrum.size(), 2);
  EXPECT_DOUBLE_EQ(r.spectrum.values(0), 0.5);
  EXPECT_DOUBLE_EQ(r.spectrum.values(1), 1.0);
}

TEST(Ingest, ErrorsCarryLineNumbers) {
  const auto path = write_file("broken.csv", "lambda,tr\n4.0,0.5\n4.1,oops\n");
  try {
    ingest_spectrum(path, SpectrumFormat::csv_tr);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse_error);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  const auto unordered = write_file("unordered.csv", "4.1,0.5\n4.0,0.5\n");
  EXPECT_THROW(ingest_spectrum(unordered, SpectrumFormat::csv_tr), Error);
  EXPECT_THROW(ingest_spectrum(scratch("missing.csv"), SpectrumFormat::csv_tr), Error);
}

TEST(MethodNames, RoundTrip) {
  for (Method m : all_methods()) {
    EXPECT_EQ(method_from_string(to_string(m)), m);
  }
  EXPECT_THROW(method_from_string("fourier"), Error);
}

#ifndef BRAGGEDGE_IO_HPP
#define BRAGGEDGE_IO_HPP

// JSON views of results and the CSV / Markdown exports.

#include <braggedge/harness.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <ostream>
#include <string>

namespace braggedge {

using Json = nlohmann::ordered_json;

Json to_json(const StrainEstimate &estimate);
Json to_json(const FitResult &fit);
Json to_json(const NoiseModel &model);
Json to_json(const Baselines &baselines);
Json to_json(const EdgeParams &params);
Json to_json(const TrialMetrics &metrics);
Json to_json(const TrialConfig &config);
Json to_json(const NoiseAnalysis &analysis);
Json to_json(const HyperparameterResult &hyper);

/// {"error": {"kind": ..., "message": ...}}
Json error_json(const std::string &kind, const std::string &message);

/// Shortest decimal that reads back to the same double.
std::string exact(double value);

void write_spectrum_csv(std::ostream &out, const TransmissionSpectrum &spectrum);

/// Rows as in the comparison table (error mean, mean magnitude, maximum,
/// standard deviation, mean predicted std, then counts), one column per
/// method. Full precision.
void write_metrics_csv(std::ostream &out, const std::vector<TrialMetrics> &metrics);
void write_metrics_markdown(std::ostream &out, const std::vector<TrialMetrics> &metrics);

/// bin_center, count, gaussian_overlay
void write_histogram_csv(std::ostream &out, const stats::Histogram &histogram);

/// Layout read by read_pixel_stack.
void write_pixel_stack(std::ostream &out, const PixelStack &stack);

void write_records_csv(std::ostream &out, const std::vector<TrialRecord> &records);

/// Opens `path` for writing, creating parent directories.
std::ofstream open_output(const std::filesystem::path &path);

} // namespace braggedge

#endif

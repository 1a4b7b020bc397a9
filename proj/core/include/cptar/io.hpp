#pragma once

// Series and model files, flat key=value configuration and CSV output.
//
// Series file layout (all little-endian):
//   "TSERIES1" | u64 n | u64 q_1 .. q_n | u64 T | T * prod(q) f64 values
// with each observation stored first-index-fastest.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cptar/factor_model.hpp"
#include "cptar/selection.hpp"
#include "cptar/simulation.hpp"
#include "cptar/sparse_coef.hpp"

namespace cptar {

inline constexpr std::string_view kSeriesMagic = "TSERIES1";
inline constexpr std::string_view kModelFormat = "cptar.model.v1";
inline constexpr std::string_view kScoreSchema = "cptar.scores.v1";
inline constexpr std::string_view kRecordSchema = "cptar.experiment.records.v1";
inline constexpr std::string_view kSummarySchema = "cptar.experiment.summary.v1";
inline constexpr std::string_view kPredictionSchema = "cptar.predictions.v1";

void write_series(const TensorSeries& series, const std::filesystem::path& path);
TensorSeries read_series(const std::filesystem::path& path);

std::string encode_series(const TensorSeries& series);
TensorSeries decode_series(std::string_view bytes);

/// One observation per row, comma separated, each row the vectorized tensor.
/// Blank lines and lines starting with '#' are skipped.
TensorSeries read_series_csv(const std::filesystem::path& path, const Shape& dims);

struct FitMetadata {
  double final_loss = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::uint64_t seed = 0;
  /// Flat copy of the estimator settings.
  std::map<std::string, std::string> config;
};

struct ModelDocument {
  LowRankCoef lowrank;
  std::optional<SparseCoef> sparse;
  FitMetadata metadata;

  /// Lag-major Q x PQ coefficient including the sparse part.
  Matrix coef() const;
};

std::string model_to_json(const ModelDocument& model);
ModelDocument model_from_json(std::string_view text);
void write_model(const ModelDocument& model, const std::filesystem::path& path);
ModelDocument read_model(const std::filesystem::path& path);

/// Flat `key = value` settings. Values may be quoted; '#' starts a comment.
class Config {
 public:
  Config() = default;
  static Config parse(std::string_view text, std::string_view origin = "config");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> get_string(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<std::size_t> get_size(const std::string& key) const;
  std::optional<std::uint64_t> get_u64(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;
  /// Comma separated, optionally in brackets: "4,4,4" or "[4, 4, 4]".
  std::optional<std::vector<double>> get_list(const std::string& key) const;
  std::optional<Shape> get_shape(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
};

std::vector<double> parse_number_list(std::string_view text);

void write_score_table(const HoldoutResult& result, const std::filesystem::path& path);
void write_experiment_records(const RateDiagnostics& diag, const std::filesystem::path& path);
void write_experiment_summary(const RateDiagnostics& diag, const std::filesystem::path& path);

/// Writes `text` to `path`, raising io_failure on any error.
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace cptar

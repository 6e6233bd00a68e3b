#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mirrorfdr {

enum class Label : std::uint8_t { null = 0, alternative = 1 };

/// One hypothesis: covariate vector, response, and (simulation only) the truth.
struct Hypothesis {
  std::vector<double> x;
  double y = 0.0;
  std::optional<Label> label;
};

/// Affine map of one covariate axis onto [0,1]. A constant axis maps to 0.5.
struct AxisScale {
  double min = 0.0;
  double max = 1.0;
  bool constant = false;

  double apply(double v) const { return constant ? 0.5 : (v - min) / (max - min); }
  double invert(double u) const { return constant ? min : min + u * (max - min); }
};

struct ResponseTransform {
  enum class Kind { identity, log, log_shift };
  Kind kind = Kind::identity;
  double shift = 0.0;

  /// Parses "identity", "log" or "log_shift:<c>".
  static ResponseTransform parse(const std::string& text);
  std::string describe() const;
};

/// Immutable table of hypotheses. Covariates are stored row-major (n x d).
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t dim, std::vector<double> covariates, std::vector<double> responses,
          std::optional<std::vector<Label>> labels = std::nullopt);

  static Dataset from_records(std::span<const Hypothesis> records);

  std::size_t size() const { return responses_.size(); }
  std::size_t dim() const { return dim_; }

  std::span<const double> covariate(std::size_t i) const {
    return {covariates_.data() + i * dim_, dim_};
  }
  std::span<const double> covariates() const { return covariates_; }
  double response(std::size_t i) const { return responses_[i]; }
  std::span<const double> responses() const { return responses_; }

  bool has_labels() const { return labels_.has_value(); }
  std::optional<Label> label(std::size_t i) const;
  std::span<const Label> labels() const;

  Hypothesis record(std::size_t i) const;

  bool is_scaled() const { return !scaler_.empty(); }
  const std::vector<AxisScale>& scaler() const { return scaler_; }
  const ResponseTransform& transform() const { return transform_; }

  std::vector<std::string> covariate_names;
  std::string response_name = "y";

 private:
  friend Dataset transform_response(const Dataset&, const ResponseTransform&);
  friend Dataset scale_covariates(const Dataset&);

  std::size_t dim_ = 0;
  std::vector<double> covariates_;
  std::vector<double> responses_;
  std::optional<std::vector<Label>> labels_;
  std::vector<AxisScale> scaler_;
  ResponseTransform transform_;
};

struct CsvSchema {
  std::vector<std::string> covariates;
  std::string response;
  std::optional<std::string> label;
};

/// Reads a headed, comma-separated file. Rows keep file order; no scaling.
/// Errors name the 0-based data row and the column.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Replaces y by ln(y) or ln(y + c). Covariates are untouched.
Dataset transform_response(const Dataset& ds, const ResponseTransform& kind);

/// Maps each covariate axis affinely onto [0,1]. Constant axes become 0.5 and
/// are flagged in the scaler. Applying it twice equals applying it once.
Dataset scale_covariates(const Dataset& ds);

enum class Norm { euclidean, max };

struct NeighborhoodQuery {
  double delta = 0.05;
  Norm norm = Norm::euclidean;
  /// Geometric expansion of delta (x1.5) until this many members; 0 disables.
  std::size_t min_size = 50;
};

struct Neighborhood {
  std::vector<std::size_t> indices;  // ascending
  double effective_delta = 0.0;
  bool expanded = false;
};

double covariate_distance(std::span<const double> a, std::span<const double> b, Norm norm);

/// Linear-scan neighborhood {j : |X_i - X_j| < delta}, always containing i.
Neighborhood neighborhood(const Dataset& ds, std::size_t i, const NeighborhoodQuery& q);

/// Same query, answered through an index sorted on the first covariate so
/// only a window of candidates is checked. Read-only and thread-safe.
class NeighborhoodIndex {
 public:
  explicit NeighborhoodIndex(const Dataset& ds);
  Neighborhood query(std::size_t i, const NeighborhoodQuery& q) const;

 private:
  void collect(std::size_t i, double delta, Norm norm, std::vector<std::size_t>& out) const;

  const Dataset* ds_;
  std::vector<std::size_t> order_;
  std::vector<double> first_;  // first covariate, in `order_`
};

}  // namespace mirrorfdr

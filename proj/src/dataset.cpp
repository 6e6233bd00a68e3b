#include "mirrorfdr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "mirrorfdr/errors.hpp"

namespace mirrorfdr {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Splits one CSV line; honours double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

std::optional<double> parse_real(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

ResponseTransform ResponseTransform::parse(const std::string& text) {
  if (text == "identity" || text.empty()) return {};
  if (text == "log") return {Kind::log, 0.0};
  const std::string prefix = "log_shift:";
  if (text.rfind(prefix, 0) == 0) {
    auto c = parse_real(text.substr(prefix.size()));
    if (!c) throw ValidationError("transform: cannot parse shift in '" + text + "'");
    return {Kind::log_shift, *c};
  }
  throw ValidationError("transform: unknown kind '" + text +
                        "' (expected identity, log, log_shift:<c>)");
}

std::string ResponseTransform::describe() const {
  switch (kind) {
    case Kind::identity:
      return "identity";
    case Kind::log:
      return "log";
    case Kind::log_shift: {
      std::ostringstream os;
      os.precision(17);
      os << "log_shift:" << shift;
      return os.str();
    }
  }
  return "identity";
}

Dataset::Dataset(std::size_t dim, std::vector<double> covariates, std::vector<double> responses,
                 std::optional<std::vector<Label>> labels)
    : dim_(dim),
      covariates_(std::move(covariates)),
      responses_(std::move(responses)),
      labels_(std::move(labels)) {
  if (dim_ == 0) throw ValidationError("dataset: covariate dimension must be at least 1");
  if (covariates_.size() != dim_ * responses_.size())
    throw ValidationError("dataset: covariate array does not match n x d");
  if (labels_ && labels_->size() != responses_.size())
    throw ValidationError("dataset: label count does not match n");
  for (std::size_t i = 0; i < responses_.size(); ++i) {
    if (!std::isfinite(responses_[i]))
      throw ValidationError("dataset: response at row " + std::to_string(i) + " is not finite");
  }
  for (std::size_t k = 0; k < covariates_.size(); ++k) {
    if (!std::isfinite(covariates_[k]))
      throw ValidationError("dataset: covariate at row " + std::to_string(k / dim_) +
                            " is not finite");
  }
  for (std::size_t a = 0; a < dim_; ++a) covariate_names.push_back("x" + std::to_string(a));
}

Dataset Dataset::from_records(std::span<const Hypothesis> records) {
  if (records.empty()) throw ValidationError("dataset: no records");
  const std::size_t d = records.front().x.size();
  std::vector<double> xs;
  std::vector<double> ys;
  xs.reserve(records.size() * d);
  ys.reserve(records.size());
  const bool labelled = records.front().label.has_value();
  std::vector<Label> labels;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.x.size() != d)
      throw ValidationError("dataset: record " + std::to_string(i) + " has dimension " +
                            std::to_string(r.x.size()) + ", expected " + std::to_string(d));
    if (r.label.has_value() != labelled)
      throw ValidationError("dataset: labels must be present on all records or none");
    xs.insert(xs.end(), r.x.begin(), r.x.end());
    ys.push_back(r.y);
    if (labelled) labels.push_back(*r.label);
  }
  return Dataset(d, std::move(xs), std::move(ys),
                 labelled ? std::optional(std::move(labels)) : std::nullopt);
}

std::optional<Label> Dataset::label(std::size_t i) const {
  if (!labels_) return std::nullopt;
  return (*labels_)[i];
}

std::span<const Label> Dataset::labels() const {
  if (!labels_) return {};
  return *labels_;
}

Hypothesis Dataset::record(std::size_t i) const {
  auto x = covariate(i);
  return {std::vector<double>(x.begin(), x.end()), responses_[i], label(i)};
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("csv: cannot open '" + path.string() + "'");
  if (schema.covariates.empty()) throw ValidationError("csv: schema names no covariate columns");

  std::string line;
  if (!std::getline(in, line) || trim(line).empty())
    throw ValidationError("csv: '" + path.string() + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);

  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t c = 0; c < header.size(); ++c) column_of.emplace(header[c], c);
  auto locate = [&](const std::string& name) {
    auto it = column_of.find(name);
    if (it == column_of.end()) throw ValidationError("csv: missing column '" + name + "'");
    return it->second;
  };

  std::vector<std::size_t> xcols;
  for (const auto& name : schema.covariates) xcols.push_back(locate(name));
  const std::size_t ycol = locate(schema.response);
  std::optional<std::size_t> lcol;
  if (schema.label) lcol = locate(*schema.label);

  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<Label> labels;
  std::size_t row = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    auto cell_error = [&](std::size_t col, const std::string& what) {
      return ValidationError("csv: row " + std::to_string(row) + " (line " +
                             std::to_string(line_no) + "), column '" + header[col] + "': " + what);
    };
    auto real_at = [&](std::size_t col) {
      if (col >= fields.size()) throw cell_error(col, "missing cell");
      auto v = parse_real(fields[col]);
      if (!v) throw cell_error(col, "cannot parse '" + fields[col] + "' as a finite real");
      return *v;
    };
    for (auto c : xcols) xs.push_back(real_at(c));
    ys.push_back(real_at(ycol));
    if (lcol) {
      if (*lcol >= fields.size()) throw cell_error(*lcol, "missing cell");
      const auto& cell = fields[*lcol];
      if (cell == "0") {
        labels.push_back(Label::null);
      } else if (cell == "1") {
        labels.push_back(Label::alternative);
      } else {
        throw cell_error(*lcol, "label must be 0 or 1, got '" + cell + "'");
      }
    }
    ++row;
  }
  if (row == 0) throw ValidationError("csv: '" + path.string() + "' has no data rows");

  Dataset ds(xcols.size(), std::move(xs), std::move(ys),
             lcol ? std::optional(std::move(labels)) : std::nullopt);
  ds.covariate_names = schema.covariates;
  ds.response_name = schema.response;
  return ds;
}

Dataset transform_response(const Dataset& ds, const ResponseTransform& kind) {
  Dataset out = ds;
  if (kind.kind == ResponseTransform::Kind::identity) {
    out.transform_ = kind;
    return out;
  }
  const double c = kind.kind == ResponseTransform::Kind::log_shift ? kind.shift : 0.0;
  for (std::size_t i = 0; i < out.responses_.size(); ++i) {
    const double arg = out.responses_[i] + c;
    if (!(arg > 0.0))
      throw ValidationError("transform " + kind.describe() + ": nonpositive argument at row " +
                            std::to_string(i));
    out.responses_[i] = std::log(arg);
  }
  out.transform_ = kind;
  return out;
}

Dataset scale_covariates(const Dataset& ds) {
  if (ds.size() < 2) throw ValidationError("scale_covariates: need at least 2 rows");
  Dataset out = ds;
  const std::size_t n = ds.size();
  const std::size_t d = ds.dim();
  std::vector<AxisScale> step(d);
  for (std::size_t a = 0; a < d; ++a) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, ds.covariates_[i * d + a]);
      hi = std::max(hi, ds.covariates_[i * d + a]);
    }
    step[a] = {lo, hi, !(hi > lo)};
    for (std::size_t i = 0; i < n; ++i) {
      auto& v = out.covariates_[i * d + a];
      v = step[a].apply(v);
    }
  }
  // Compose with an earlier scaler so it always maps raw input to [0,1].
  out.scaler_.resize(d);
  for (std::size_t a = 0; a < d; ++a) {
    if (ds.scaler_.empty()) {
      out.scaler_[a] = step[a];
    } else {
      const auto& prev = ds.scaler_[a];
      if (prev.constant || step[a].constant) {
        out.scaler_[a] = {prev.min, prev.max, true};
      } else {
        out.scaler_[a] = {prev.invert(step[a].min), prev.invert(step[a].max), false};
      }
    }
  }
  return out;
}

double covariate_distance(std::span<const double> a, std::span<const double> b, Norm norm) {
  if (a.size() == 1) return std::abs(a[0] - b[0]);
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = std::abs(a[k] - b[k]);
    if (norm == Norm::max) {
      acc = std::max(acc, diff);
    } else {
      acc += diff * diff;
    }
  }
  return norm == Norm::max ? acc : std::sqrt(acc);
}

namespace {

template <typename Collect>
Neighborhood expand_until_full(std::size_t n, const NeighborhoodQuery& q, Collect&& collect) {
  if (!(q.delta > 0.0)) throw ValidationError("neighborhood: delta must be positive");
  Neighborhood nb;
  nb.effective_delta = q.delta;
  collect(nb.effective_delta, nb.indices);
  const std::size_t target = std::min(q.min_size, n);
  while (nb.indices.size() < target) {
    nb.effective_delta *= 1.5;
    nb.expanded = true;
    nb.indices.clear();
    collect(nb.effective_delta, nb.indices);
  }
  return nb;
}

}  // namespace

Neighborhood neighborhood(const Dataset& ds, std::size_t i, const NeighborhoodQuery& q) {
  if (i >= ds.size()) throw ValidationError("neighborhood: index out of range");
  const auto xi = ds.covariate(i);
  return expand_until_full(ds.size(), q, [&](double delta, std::vector<std::size_t>& out) {
    for (std::size_t j = 0; j < ds.size(); ++j) {
      if (j == i || covariate_distance(xi, ds.covariate(j), q.norm) < delta) out.push_back(j);
    }
  });
}

NeighborhoodIndex::NeighborhoodIndex(const Dataset& ds) : ds_(&ds), order_(ds.size()) {
  for (std::size_t j = 0; j < order_.size(); ++j) order_[j] = j;
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
    return ds.covariate(a)[0] < ds.covariate(b)[0];
  });
  first_.reserve(order_.size());
  for (auto j : order_) first_.push_back(ds.covariate(j)[0]);
}

void NeighborhoodIndex::collect(std::size_t i, double delta, Norm norm,
                                std::vector<std::size_t>& out) const {
  const auto xi = ds_->covariate(i);
  // Every norm dominates |dx_0|, so the window on the first axis is a superset;
  // the slack only widens it and the exact test below decides.
  const double slack = 1e-12 * (1.0 + std::abs(xi[0]) + delta);
  auto lo = std::lower_bound(first_.begin(), first_.end(), xi[0] - delta - slack);
  auto hi = std::upper_bound(lo, first_.end(), xi[0] + delta + slack);
  for (auto it = lo; it != hi; ++it) {
    const std::size_t j = order_[static_cast<std::size_t>(it - first_.begin())];
    if (j == i || covariate_distance(xi, ds_->covariate(j), norm) < delta) out.push_back(j);
  }
  std::sort(out.begin(), out.end());
}

Neighborhood NeighborhoodIndex::query(std::size_t i, const NeighborhoodQuery& q) const {
  if (i >= ds_->size()) throw ValidationError("neighborhood: index out of range");
  return expand_until_full(ds_->size(), q, [&](double delta, std::vector<std::size_t>& out) {
    collect(i, delta, q.norm, out);
  });
}

}  // namespace mirrorfdr

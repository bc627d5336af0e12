#include "gpvs/dataset.hpp"

#include "gpvs/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gpvs {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == "?" ||
         s == "null" || s == "NULL";
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw DataError(DataError::Code::MissingColumn, "column '" + name + "' not found in header");
  }
  return static_cast<std::size_t>(it - header.begin());
}

bool is_integral(double v) { return std::isfinite(v) && std::floor(v) == v; }

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::size_t response_size(const Response& r) {
  return std::visit(
      [](const auto& resp) -> std::size_t {
        using T = std::decay_t<decltype(resp)>;
        if constexpr (std::is_same_v<T, ContinuousResponse>) return static_cast<std::size_t>(resp.y.size());
        if constexpr (std::is_same_v<T, BinaryResponse>) return resp.t.size();
        if constexpr (std::is_same_v<T, CountResponse>) return resp.s.size();
        if constexpr (std::is_same_v<T, SurvivalResponse>) return static_cast<std::size_t>(resp.time.size());
      },
      r);
}

void ModelData::validate() const {
  if (x.rows() < 2) throw DataError(DataError::Code::TooFewRows, "need at least 2 observations");
  if (x.cols() < 1) throw DataError(DataError::Code::Shape, "need at least 1 predictor");
  if (response_size(response) != n()) {
    throw DataError(DataError::Code::Shape, "response length does not match number of rows");
  }
  if (column_mins.size() != x.cols() || column_ranges.size() != x.cols()) {
    throw DataError(DataError::Code::Shape, "normalization constants do not match column count");
  }
  if (!x.allFinite()) throw DataError(DataError::Code::MissingValue, "design matrix has non-finite entries");
  if (scaling == Scaling::UnitCube && (x.minCoeff() < 0.0 || x.maxCoeff() > 1.0)) {
    throw DataError(DataError::Code::Shape, "normalized design matrix leaves the unit cube");
  }
  if (const auto* b = std::get_if<BinaryResponse>(&response)) {
    for (int t : b->t) {
      if (t != 0 && t != 1) throw DataError(DataError::Code::BadResponse, "binary response must be 0/1");
    }
  } else if (const auto* c = std::get_if<CountResponse>(&response)) {
    for (auto s : c->s) {
      if (s < 0) throw DataError(DataError::Code::BadResponse, "counts must be non-negative");
    }
  } else if (const auto* sv = std::get_if<SurvivalResponse>(&response)) {
    if (sv->event.size() != static_cast<std::size_t>(sv->time.size())) {
      throw DataError(DataError::Code::Shape, "survival time/event length mismatch");
    }
    for (Eigen::Index i = 0; i < sv->time.size(); ++i) {
      if (!(sv->time[i] > 0.0)) throw DataError(DataError::Code::BadResponse, "survival times must be positive");
      int d = sv->event[static_cast<std::size_t>(i)];
      if (d != 0 && d != 1) throw DataError(DataError::Code::BadCensoring, "event flags must be 0/1");
    }
  }
}

Normalized normalize(const Eigen::MatrixXd& raw, Scaling scaling) {
  if (raw.rows() == 0 || raw.cols() == 0) {
    throw DataError(DataError::Code::Shape, "cannot normalize an empty matrix");
  }
  const Eigen::Index n = raw.rows();
  const Eigen::Index p = raw.cols();
  Normalized out{Eigen::MatrixXd(n, p), Eigen::VectorXd(p), Eigen::VectorXd(p)};
  for (Eigen::Index k = 0; k < p; ++k) {
    auto col = raw.col(k);
    if (scaling == Scaling::UnitCube) {
      double lo = col.minCoeff();
      double range = col.maxCoeff() - lo;
      out.mins[k] = lo;
      out.ranges[k] = range;
      if (range == 0.0) {
        out.x.col(k).setConstant(0.5);
      } else {
        for (Eigen::Index i = 0; i < n; ++i) out.x(i, k) = (col[i] - lo) / range;
      }
    } else {
      double mean = col.mean();
      double sd = std::sqrt((col.array() - mean).square().mean());
      out.mins[k] = mean;
      out.ranges[k] = sd;
      if (sd == 0.0) {
        out.x.col(k).setZero();
      } else {
        out.x.col(k) = (col.array() - mean) / sd;
      }
    }
  }
  return out;
}

Eigen::MatrixXd apply_normalization(const Eigen::MatrixXd& raw, const Eigen::VectorXd& mins,
                                    const Eigen::VectorXd& ranges, Scaling scaling) {
  if (raw.cols() != mins.size() || raw.cols() != ranges.size()) {
    throw DataError(DataError::Code::Shape, "column count does not match normalization constants");
  }
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index k = 0; k < raw.cols(); ++k) {
    if (ranges[k] == 0.0) {
      out.col(k).setConstant(scaling == Scaling::UnitCube ? 0.5 : 0.0);
    } else {
      out.col(k) = (raw.col(k).array() - mins[k]) / ranges[k];
    }
  }
  return out;
}

Eigen::MatrixXd denormalize(const Eigen::MatrixXd& x, const Eigen::VectorXd& mins,
                            const Eigen::VectorXd& ranges, Scaling /*scaling*/) {
  if (x.cols() != mins.size() || x.cols() != ranges.size()) {
    throw DataError(DataError::Code::Shape, "column count does not match normalization constants");
  }
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    if (ranges[k] == 0.0) {
      out.col(k).setConstant(mins[k]);
    } else {
      out.col(k) = (x.col(k).array() * ranges[k]) + mins[k];
    }
  }
  return out;
}

CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Code::Io, "cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError(DataError::Code::Parse, "'" + path + "' is empty");
  table.header = split_line(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size()) {
      throw DataError(DataError::Code::Parse, path + ":" + std::to_string(line_no) + ": expected " +
                                                  std::to_string(table.header.size()) + " fields, got " +
                                                  std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const auto& f = fields[j];
      if (is_missing_token(f)) {
        throw DataError(DataError::Code::MissingValue, path + ":" + std::to_string(line_no) +
                                                           ": missing value in column '" + table.header[j] + "'");
      }
      double v = 0.0;
      const char* first = f.data();
      const char* last = f.data() + f.size();
      if (*first == '+') ++first;
      auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc() || res.ptr != last) {
        throw DataError(DataError::Code::Parse, path + ":" + std::to_string(line_no) + ": cannot parse '" + f +
                                                    "' in column '" + table.header[j] + "'");
      }
      row[j] = v;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

RawData split_table(const CsvTable& table, const ResponseSpec& spec) {
  const std::size_t n = table.rows.size();
  std::vector<std::size_t> response_cols{column_index(table.header, spec.column)};
  if (spec.kind == ResponseKind::Survival) {
    if (spec.event_column.empty()) {
      throw DataError(DataError::Code::MissingColumn, "survival response needs an event column");
    }
    response_cols.push_back(column_index(table.header, spec.event_column));
  }
  std::vector<std::size_t> predictor_cols;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (std::find(response_cols.begin(), response_cols.end(), j) == response_cols.end()) {
      predictor_cols.push_back(j);
    }
  }
  if (predictor_cols.empty()) throw DataError(DataError::Code::Shape, "no predictor columns");
  if (n < 2) throw DataError(DataError::Code::TooFewRows, "need at least 2 rows, got " + std::to_string(n));

  RawData raw;
  raw.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(predictor_cols.size()));
  for (std::size_t j = 0; j < predictor_cols.size(); ++j) {
    raw.column_names.push_back(table.header[predictor_cols[j]]);
    for (std::size_t i = 0; i < n; ++i) {
      raw.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = table.rows[i][predictor_cols[j]];
    }
  }

  const std::size_t rc = response_cols[0];
  switch (spec.kind) {
    case ResponseKind::Continuous: {
      ContinuousResponse r{Eigen::VectorXd(static_cast<Eigen::Index>(n))};
      for (std::size_t i = 0; i < n; ++i) r.y[static_cast<Eigen::Index>(i)] = table.rows[i][rc];
      raw.response = std::move(r);
      break;
    }
    case ResponseKind::Binary: {
      BinaryResponse r;
      for (std::size_t i = 0; i < n; ++i) {
        double v = table.rows[i][rc];
        if (v != 0.0 && v != 1.0) {
          throw DataError(DataError::Code::BadResponse,
                          "row " + std::to_string(i + 1) + ": binary response must be 0 or 1");
        }
        r.t.push_back(static_cast<int>(v));
      }
      raw.response = std::move(r);
      break;
    }
    case ResponseKind::Count: {
      CountResponse r;
      for (std::size_t i = 0; i < n; ++i) {
        double v = table.rows[i][rc];
        if (!is_integral(v) || v < 0.0) {
          throw DataError(DataError::Code::BadResponse,
                          "row " + std::to_string(i + 1) + ": counts must be non-negative integers");
        }
        r.s.push_back(static_cast<std::int64_t>(v));
      }
      raw.response = std::move(r);
      break;
    }
    case ResponseKind::Survival: {
      SurvivalResponse r{Eigen::VectorXd(static_cast<Eigen::Index>(n)), {}};
      const std::size_t ec = response_cols[1];
      for (std::size_t i = 0; i < n; ++i) {
        double t = table.rows[i][rc];
        if (!(t > 0.0)) {
          throw DataError(DataError::Code::BadResponse,
                          "row " + std::to_string(i + 1) + ": survival times must be positive");
        }
        double d = table.rows[i][ec];
        if (d != 0.0 && d != 1.0) {
          throw DataError(DataError::Code::BadCensoring,
                          "row " + std::to_string(i + 1) + ": censoring flag must be 0 or 1");
        }
        r.time[static_cast<Eigen::Index>(i)] = t;
        r.event.push_back(static_cast<int>(d));
      }
      raw.response = std::move(r);
      break;
    }
  }
  return raw;
}

ModelData load_csv(const std::string& path, const ResponseSpec& spec, Scaling scaling) {
  auto raw = split_table(read_csv_table(path), spec);
  auto norm = normalize(raw.x, scaling);
  ModelData data{std::move(norm.x), std::move(raw.response), std::move(norm.mins), std::move(norm.ranges),
                 std::move(raw.column_names), scaling};
  data.validate();
  return data;
}

void write_csv(const std::string& path, const ModelData& data, const ResponseSpec& spec) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Code::Io, "cannot write '" + path + "'");
  const std::size_t p = data.p();
  for (std::size_t k = 0; k < p; ++k) {
    out << (k < data.column_names.size() ? data.column_names[k] : "x" + std::to_string(k + 1)) << ',';
  }
  const bool survival = data.kind() == ResponseKind::Survival;
  std::string rname = spec.column.empty() ? (survival ? "time" : "y") : spec.column;
  out << rname;
  if (survival) out << ',' << (spec.event_column.empty() ? "event" : spec.event_column);
  out << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k < p; ++k) out << format_double(data.x(ii, static_cast<Eigen::Index>(k))) << ',';
    std::visit(
        [&](const auto& r) {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, ContinuousResponse>) out << format_double(r.y[ii]);
          if constexpr (std::is_same_v<T, BinaryResponse>) out << r.t[i];
          if constexpr (std::is_same_v<T, CountResponse>) out << r.s[i];
          if constexpr (std::is_same_v<T, SurvivalResponse>) out << format_double(r.time[ii]) << ',' << r.event[i];
        },
        data.response);
    out << '\n';
  }
}

ModelData subset_rows(const ModelData& data, const std::vector<std::size_t>& rows) {
  ModelData out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), data.x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = data.x.row(static_cast<Eigen::Index>(rows[i]));
  }
  out.column_mins = data.column_mins;
  out.column_ranges = data.column_ranges;
  out.column_names = data.column_names;
  out.scaling = data.scaling;
  out.response = std::visit(
      [&](const auto& r) -> Response {
        using T = std::decay_t<decltype(r)>;
        T sub;
        if constexpr (std::is_same_v<T, ContinuousResponse>) {
          sub.y.resize(static_cast<Eigen::Index>(rows.size()));
          for (std::size_t i = 0; i < rows.size(); ++i) sub.y[static_cast<Eigen::Index>(i)] = r.y[static_cast<Eigen::Index>(rows[i])];
        } else if constexpr (std::is_same_v<T, BinaryResponse>) {
          for (auto i : rows) sub.t.push_back(r.t[i]);
        } else if constexpr (std::is_same_v<T, CountResponse>) {
          for (auto i : rows) sub.s.push_back(r.s[i]);
        } else {
          sub.time.resize(static_cast<Eigen::Index>(rows.size()));
          for (std::size_t i = 0; i < rows.size(); ++i) {
            sub.time[static_cast<Eigen::Index>(i)] = r.time[static_cast<Eigen::Index>(rows[i])];
            sub.event.push_back(r.event[rows[i]]);
          }
        }
        return sub;
      },
      data.response);
  return out;
}

}  // namespace gpvs

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace gpvs {

struct ContinuousResponse {
  Eigen::VectorXd y;
};

struct BinaryResponse {
  std::vector<int> t;
};

struct CountResponse {
  std::vector<std::int64_t> s;
};

struct SurvivalResponse {
  Eigen::VectorXd time;
  std::vector<int> event;  // 1 = observed failure, 0 = right censored
};

using Response = std::variant<ContinuousResponse, BinaryResponse, CountResponse, SurvivalResponse>;

enum class ResponseKind { Continuous, Binary, Count, Survival };

/// Column scaling applied to the raw design matrix.
enum class Scaling { UnitCube, Standardize };

/// Normalized design matrix plus one response variant.
///
/// `column_mins` / `column_ranges` hold the per-column offset and scale used
/// to map raw predictors into the stored representation (min/range for the
/// unit cube, mean/sd under standardization). The object is immutable once
/// built and may be shared across threads.
struct ModelData {
  Eigen::MatrixXd x;
  Response response;
  Eigen::VectorXd column_mins;
  Eigen::VectorXd column_ranges;
  std::vector<std::string> column_names;
  Scaling scaling = Scaling::UnitCube;

  std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(x.cols()); }
  ResponseKind kind() const { return static_cast<ResponseKind>(response.index()); }

  /// Throws DataError if shapes or value domains are violated.
  void validate() const;
};

struct Normalized {
  Eigen::MatrixXd x;
  Eigen::VectorXd mins;
  Eigen::VectorXd ranges;
};

/// Column-wise min-max scaling to [0,1]; zero-range columns become 0.5.
/// With Scaling::Standardize columns are centred and divided by their
/// (population) standard deviation, and zero-variance columns become 0.
Normalized normalize(const Eigen::MatrixXd& raw, Scaling scaling = Scaling::UnitCube);

/// Apply stored constants to new rows (e.g. a test set). Values may fall
/// outside [0,1]; they are not clamped.
Eigen::MatrixXd apply_normalization(const Eigen::MatrixXd& raw, const Eigen::VectorXd& mins,
                                    const Eigen::VectorXd& ranges, Scaling scaling = Scaling::UnitCube);

Eigen::MatrixXd denormalize(const Eigen::MatrixXd& x, const Eigen::VectorXd& mins,
                            const Eigen::VectorXd& ranges, Scaling scaling = Scaling::UnitCube);

/// Which CSV column(s) hold the response and how to read them.
struct ResponseSpec {
  std::string column;        // response, or survival time
  ResponseKind kind = ResponseKind::Continuous;
  std::string event_column;  // survival only
};

/// Raw table read from a headered CSV file.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv_table(const std::string& path);

/// Split a table into a raw design matrix and a response. Every column not
/// used by the response is a predictor.
struct RawData {
  Eigen::MatrixXd x;
  Response response;
  std::vector<std::string> column_names;
};
RawData split_table(const CsvTable& table, const ResponseSpec& spec);

ModelData load_csv(const std::string& path, const ResponseSpec& spec,
                   Scaling scaling = Scaling::UnitCube);

/// Writes the normalized predictors followed by the response column(s).
/// Response columns are named per `spec` (defaults: y, or time,event).
void write_csv(const std::string& path, const ModelData& data, const ResponseSpec& spec);

/// Row subset (keeps normalization constants).
ModelData subset_rows(const ModelData& data, const std::vector<std::size_t>& rows);

/// Number of observations in a response.
std::size_t response_size(const Response& r);

/// Formats a double so that parsing it back yields the same bits.
std::string format_double(double v);

}  // namespace gpvs

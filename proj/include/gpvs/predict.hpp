#pragma once

#include "gpvs/dataset.hpp"
#include "gpvs/sampler.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace gpvs {

struct PredictOptions {
  double threshold = 0.5;      // marginal inclusion needed to keep a predictor
  std::size_t subsample = 10;  // use every subsample-th retained draw
};

struct Metrics {
  double normalized_mspe = 0.0;
  double rmspe = 0.0;
  double r2 = 0.0;
};

struct PredictionResult {
  /// Regression: predicted response. Count: predicted mean count. Binary and
  /// Cox: averaged latent value at the test inputs.
  Eigen::VectorXd y_hat;
  /// Averaged latent value D at the test inputs (all models).
  Eigen::VectorXd latent;
  /// Per selection set, 1 where marginal inclusion >= threshold.
  std::vector<std::vector<std::uint8_t>> selected;
  std::size_t draws_used = 0;
  std::vector<std::string> warnings;
};

/// Per selection set, marginal inclusion >= threshold.
std::vector<std::vector<std::uint8_t>> selected_variables(const PosteriorTrace& trace, double threshold);

/// Mean of the recorded latent vectors (latent models only).
Eigen::VectorXd posterior_mean_latent(const PosteriorTrace& trace);

/// Average over thinned draws of C_fX(theta) C_XX(theta)^{-1} z_hat, with
/// covariances restricted to the selected predictors. For the regression
/// model the per-draw smoother C_fX (C_XX + I/r)^{-1} (y - ybar) + ybar is used.
PredictionResult predictive_mean(const PosteriorTrace& trace, const ModelData& train, const Eigen::MatrixXd& test_x,
                                 const PredictOptions& options = {});

/// Logit: 1 iff the draw-averaged logistic probability exceeds 0.5.
/// Probit: 1 iff the averaged latent value is positive. Ties go to 0.
std::vector<int> classify(const PosteriorTrace& trace, const ModelData& train, const Eigen::MatrixXd& test_x,
                          const PredictOptions& options = {});

/// Breslow cumulative baseline hazard at `grid` from training times and latent values.
Eigen::VectorXd breslow_cumulative_hazard(const Eigen::VectorXd& time, const std::vector<int>& event,
                                          const Eigen::VectorXd& z, const Eigen::VectorXd& grid);

struct SurvivorCurves {
  Eigen::VectorXd grid;
  Eigen::VectorXd baseline;  // S0 on the grid
  Eigen::MatrixXd curves;    // one row per test case
  std::vector<std::string> warnings;

  /// Column mean of `curves`.
  Eigen::VectorXd average() const { return curves.colwise().mean().transpose(); }
};

/// S_i(t) = S0(t)^{exp(z_f,i)} with S0 = exp(-H0) from the Breslow estimator.
SurvivorCurves survivor_curve(const PosteriorTrace& trace, const ModelData& train, const Eigen::MatrixXd& test_x,
                              const Eigen::VectorXd& grid, const PredictOptions& options = {});

/// Product-limit estimate evaluated on `grid` (right-continuous steps).
Eigen::VectorXd kaplan_meier(const Eigen::VectorXd& time, const std::vector<int>& event, const Eigen::VectorXd& grid);

/// Normalized MSPE (by the population variance of y_true), root-MSPE and R^2.
Metrics metrics(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_hat);

/// Fraction of equal labels.
double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted);

}  // namespace gpvs

#include "gpvs/predict.hpp"

#include "gpvs/distcache.hpp"
#include "gpvs/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace gpvs {

std::vector<std::vector<std::uint8_t>> selected_variables(const PosteriorTrace& trace, double threshold) {
  std::vector<std::vector<std::uint8_t>> out;
  const std::size_t sets = trace.records.empty() ? 0 : trace.records.front().params.selection_sets();
  for (std::size_t s = 0; s < sets; ++s) {
    const auto incl = marginal_inclusion(trace, s);
    std::vector<std::uint8_t> sel(incl.size());
    for (std::size_t k = 0; k < incl.size(); ++k) sel[k] = incl[k] >= threshold ? 1 : 0;
    out.push_back(std::move(sel));
  }
  return out;
}

Eigen::VectorXd posterior_mean_latent(const PosteriorTrace& trace) {
  if (trace.records.empty()) throw Error("posterior_mean_latent: empty trace");
  if (trace.records.front().z.size() == 0) throw Error("posterior_mean_latent: trace holds no latent values");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(trace.records.front().z.size());
  for (const auto& r : trace.records) mean += r.z;
  return mean / static_cast<double>(trace.records.size());
}

namespace {

/// Draw parameters with every unselected coordinate switched off.
KernelParams restrict_to_selected(const KernelParams& draw, const std::vector<std::vector<std::uint8_t>>& selected) {
  KernelParams eff(draw.family(), draw.p());
  eff.set_lambda_a(draw.lambda_a());
  for (std::size_t t = 0; t < draw.terms(); ++t) eff.set_lambda_z(t, draw.lambda_z(t));
  eff.set_nu(draw.nu());
  for (std::size_t s = 0; s < draw.selection_sets(); ++s) {
    const auto terms = draw.terms_of_set(s);
    for (std::size_t k = 0; k < draw.p(); ++k) {
      if (!selected[s][k] || !draw.included(s, k)) continue;
      std::vector<double> rhos;
      for (auto t : terms) rhos.push_back(draw.rho(t, k));
      eff.include(s, k, rhos);
    }
  }
  return eff;
}

struct DrawLatents {
  Eigen::MatrixXd per_draw;  // n_f x draws
  std::vector<std::vector<std::uint8_t>> selected;
  std::vector<std::string> warnings;
};

DrawLatents latent_per_draw(const PosteriorTrace& trace, const ModelData& train, const Eigen::MatrixXd& test_x,
                            const PredictOptions& options) {
  if (trace.records.empty()) throw Error("prediction: empty trace");
  if (options.subsample == 0) throw ConfigError("prediction: subsample must be at least 1");
  if (static_cast<std::size_t>(test_x.cols()) != train.p() || trace.p != train.p()) {
    throw DataError(DataError::Code::Shape, "prediction: test predictors do not match the training data");
  }
  DrawLatents out;
  out.selected = selected_variables(trace, options.threshold);
  const bool any = std::any_of(out.selected.begin(), out.selected.end(), [](const auto& sel) {
    return std::any_of(sel.begin(), sel.end(), [](std::uint8_t v) { return v != 0; });
  });

  std::vector<std::size_t> draws;
  for (std::size_t i = 0; i < trace.records.size(); i += options.subsample) draws.push_back(i);
  out.per_draw.resize(test_x.rows(), static_cast<Eigen::Index>(draws.size()));

  const bool regression = trace.model == ModelKind::Regression;
  if (!any) {
    out.warnings.push_back("no predictor reached the inclusion threshold; predicting the intercept only");
    out.per_draw.setConstant(regression ? trace.y_mean : 0.0);
    return out;
  }

  const DistanceCache cache_xx = build_cache(train.x, train.x);
  const DistanceCache cache_fx = build_cache(test_x, train.x);
  Eigen::VectorXd target;
  double nugget = 0.0;
  if (regression) {
    target = std::get<ContinuousResponse>(train.response).y.array() - trace.y_mean;
  } else {
    target = posterior_mean_latent(trace);
    if (static_cast<std::size_t>(target.size()) != train.n()) {
      throw DataError(DataError::Code::Shape, "prediction: latent length differs from the training rows");
    }
    nugget = trace.model == ModelKind::Probit ? 0.0 : trace.options.latent_jitter;
  }

  for (std::size_t d = 0; d < draws.size(); ++d) {
    const TraceRecord& rec = trace.records[draws[d]];
    const KernelParams eff = restrict_to_selected(rec.params, out.selected);
    Eigen::MatrixXd c_xx = build_cov(cache_xx, eff).c;
    const Eigen::MatrixXd c_fx = build_cov(cache_fx, eff).c;
    c_xx.diagonal().array() += regression ? 1.0 / rec.h.r : nugget;
    const Eigen::VectorXd col = c_fx * factorize(c_xx).solve(target);
    out.per_draw.col(static_cast<Eigen::Index>(d)) = regression ? Eigen::VectorXd(col.array() + trace.y_mean) : col;
  }
  return out;
}

double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

PredictionResult predictive_mean(const PosteriorTrace& trace, const ModelData& train, const Eigen::MatrixXd& test_x,
                                 const PredictOptions& options) {
  DrawLatents dl = latent_per_draw(trace, train, test_x, options);
  PredictionResult res;
  res.latent = dl.per_draw.rowwise().mean();
  res.y_hat = trace.model == ModelKind::Count ? Eigen::VectorXd(res.latent.array().exp()) : res.latent;
  res.selected = std::move(dl.selected);
  res.draws_used = static_cast<std::size_t>(dl.per_draw.cols());
  res.warnings = std::move(dl.warnings);
  return res;
}

std::vector<int> classify(const PosteriorTrace& trace, const ModelData& train, const Eigen::MatrixXd& test_x,
                          const PredictOptions& options) {
  if (trace.model != ModelKind::Logit && trace.model != ModelKind::Probit) {
    throw ConfigError("classify needs a binary model, got " + to_string(trace.model));
  }
  const DrawLatents dl = latent_per_draw(trace, train, test_x, options);
  std::vector<int> labels(static_cast<std::size_t>(test_x.rows()));
  for (Eigen::Index i = 0; i < test_x.rows(); ++i) {
    if (trace.model == ModelKind::Logit) {
      double prob = 0.0;
      for (Eigen::Index d = 0; d < dl.per_draw.cols(); ++d) prob += logistic(dl.per_draw(i, d));
      prob /= static_cast<double>(dl.per_draw.cols());
      labels[static_cast<std::size_t>(i)] = prob > 0.5 ? 1 : 0;
    } else {
      labels[static_cast<std::size_t>(i)] = dl.per_draw.row(i).mean() > 0.0 ? 1 : 0;
    }
  }
  return labels;
}

namespace {

void check_survival(const Eigen::VectorXd& time, const std::vector<int>& event) {
  if (static_cast<std::size_t>(time.size()) != event.size()) {
    throw DataError(DataError::Code::Shape, "survival: time and event lengths differ");
  }
  if (std::none_of(event.begin(), event.end(), [](int e) { return e == 1; })) {
    throw DataError(DataError::Code::BadCensoring, "survival: every observation is censored");
  }
}

std::map<double, double> deaths_by_time(const Eigen::VectorXd& time, const std::vector<int>& event) {
  std::map<double, double> d;
  for (std::size_t i = 0; i < event.size(); ++i) {
    if (event[i] == 1) d[time[static_cast<Eigen::Index>(i)]] += 1.0;
  }
  return d;
}

}  // namespace

Eigen::VectorXd breslow_cumulative_hazard(const Eigen::VectorXd& time, const std::vector<int>& event,
                                          const Eigen::VectorXd& z, const Eigen::VectorXd& grid) {
  check_survival(time, event);
  if (z.size() != time.size()) throw DataError(DataError::Code::Shape, "breslow: latent length differs");
  std::vector<double> jump_t, jump_h;
  double cum = 0.0;
  for (const auto& [t, d] : deaths_by_time(time, event)) {
    double risk = 0.0;
    for (Eigen::Index j = 0; j < time.size(); ++j) {
      if (time[j] >= t) risk += std::exp(z[j]);
    }
    cum += d / risk;
    jump_t.push_back(t);
    jump_h.push_back(cum);
  }
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    const auto it = std::upper_bound(jump_t.begin(), jump_t.end(), grid[g]);
    out[g] = it == jump_t.begin() ? 0.0 : jump_h[static_cast<std::size_t>(it - jump_t.begin()) - 1];
  }
  return out;
}

SurvivorCurves survivor_curve(const PosteriorTrace& trace, const ModelData& train, const Eigen::MatrixXd& test_x,
                              const Eigen::VectorXd& grid, const PredictOptions& options) {
  if (trace.model != ModelKind::Cox) throw ConfigError("survivor_curve needs the Cox model");
  const auto& surv = std::get<SurvivalResponse>(train.response);
  SurvivorCurves out;
  out.grid = grid;
  const double t_max = surv.time.maxCoeff();
  if (grid.size() > 0 && (grid.maxCoeff() > t_max || grid.minCoeff() < 0.0)) {
    out.warnings.push_back("time grid extends outside the observed range; the estimate is held flat there");
  }
  const Eigen::VectorXd z_hat = posterior_mean_latent(trace);
  const Eigen::VectorXd hazard = breslow_cumulative_hazard(surv.time, surv.event, z_hat, grid);
  out.baseline = (-hazard.array()).exp();
  const PredictionResult pred = predictive_mean(trace, train, test_x, options);
  for (auto& w : pred.warnings) out.warnings.push_back(w);
  out.curves.resize(test_x.rows(), grid.size());
  for (Eigen::Index i = 0; i < test_x.rows(); ++i) {
    const double scale = std::exp(pred.latent[i]);
    for (Eigen::Index g = 0; g < grid.size(); ++g) out.curves(i, g) = std::exp(-hazard[g] * scale);
  }
  return out;
}

Eigen::VectorXd kaplan_meier(const Eigen::VectorXd& time, const std::vector<int>& event, const Eigen::VectorXd& grid) {
  check_survival(time, event);
  std::vector<double> step_t, step_s;
  double s = 1.0;
  for (const auto& [t, d] : deaths_by_time(time, event)) {
    double at_risk = 0.0;
    for (Eigen::Index j = 0; j < time.size(); ++j) at_risk += time[j] >= t ? 1.0 : 0.0;
    s *= 1.0 - d / at_risk;
    step_t.push_back(t);
    step_s.push_back(s);
  }
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    const auto it = std::upper_bound(step_t.begin(), step_t.end(), grid[g]);
    out[g] = it == step_t.begin() ? 1.0 : step_s[static_cast<std::size_t>(it - step_t.begin()) - 1];
  }
  return out;
}

Metrics metrics(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_hat) {
  if (y_true.size() != y_hat.size() || y_true.size() == 0) {
    throw DataError(DataError::Code::Shape, "metrics: vectors must be non-empty and of equal length");
  }
  const double n = static_cast<double>(y_true.size());
  const double var = (y_true.array() - y_true.mean()).square().sum() / n;
  if (!(var > 0.0)) throw NumericalError("metrics: test responses have zero variance");
  const double mse = (y_true - y_hat).squaredNorm() / n;
  Metrics m;
  m.normalized_mspe = mse / var;
  m.rmspe = std::sqrt(mse);
  m.r2 = 1.0 - m.normalized_mspe;
  return m;
}

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size() || truth.empty()) {
    throw DataError(DataError::Code::Shape, "accuracy: label vectors must be non-empty and of equal length");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == predicted[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace gpvs

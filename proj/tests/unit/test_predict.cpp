#include "gpvs/distcache.hpp"
#include "gpvs/error.hpp"
#include "gpvs/predict.hpp"
#include "gpvs/simgen.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace gpvs;

namespace {

KernelParams two_coordinate_params() {
  KernelParams params(KernelFamily::Exp1, 3);
  params.include(0, 0, {0.2});
  params.include(0, 2, {0.6});
  params.set_lambda_a(2.0);
  params.set_lambda_z(0, 0.8);
  return params;
}

PosteriorTrace fixed_trace(ModelKind model, const KernelParams& params, std::size_t records, double r = 20.0,
                           const Eigen::VectorXd& z = {}) {
  PosteriorTrace trace;
  trace.model = model;
  trace.p = params.p();
  for (std::size_t i = 0; i < records; ++i) {
    TraceRecord rec;
    rec.iteration = i;
    rec.params = params;
    rec.h.r = r;
    rec.z = z;
    trace.records.push_back(rec);
  }
  return trace;
}

ModelData latent_data(const Eigen::MatrixXd& x, Response response) {
  ModelData d;
  d.x = x;
  d.response = std::move(response);
  d.column_mins = Eigen::VectorXd::Zero(x.cols());
  d.column_ranges = Eigen::VectorXd::Ones(x.cols());
  for (Eigen::Index k = 0; k < x.cols(); ++k) d.column_names.push_back("x" + std::to_string(k + 1));
  return d;
}

/// Kaplan-Meier by a plain loop over sorted distinct event times.
double km_oracle(const Eigen::VectorXd& time, const std::vector<int>& event, double t) {
  std::vector<double> times;
  for (Eigen::Index i = 0; i < time.size(); ++i) {
    if (event[static_cast<std::size_t>(i)]) times.push_back(time[i]);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  double s = 1.0;
  for (double u : times) {
    if (u > t) break;
    double deaths = 0.0, risk = 0.0;
    for (Eigen::Index i = 0; i < time.size(); ++i) {
      if (time[i] >= u) risk += 1.0;
      if (time[i] == u && event[static_cast<std::size_t>(i)]) deaths += 1.0;
    }
    s *= (risk - deaths) / risk;
  }
  return s;
}

}  // namespace

TEST_CASE("interpolation identity when test equals train") {
  const ModelData train = oracle::regression_fixture(12, 3, 5);
  const PosteriorTrace trace = fixed_trace(ModelKind::Regression, two_coordinate_params(), 3, 1e9);
  PosteriorTrace centred = trace;
  centred.y_mean = std::get<ContinuousResponse>(train.response).y.mean();
  const PredictionResult pred = predictive_mean(centred, train, train.x);
  // residual is (I/r)(C + I/r)^{-1}(y - ybar), bounded by |y - ybar| / (r lambda_min(C))
  const Eigen::VectorXd& y = std::get<ContinuousResponse>(train.response).y;
  const Eigen::MatrixXd c = build_cov(build_cache(train.x, train.x), two_coordinate_params()).c;
  const double lambda_min = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c).eigenvalues().minCoeff();
  REQUIRE(lambda_min > 0.0);
  const double bound = (y.array() - centred.y_mean).matrix().norm() / (1e9 * lambda_min);
  CHECK((pred.y_hat - y).norm() <= bound * (1.0 + 1e-6) + 1e-10);

  // latent model without a nugget returns z_hat itself
  const Eigen::VectorXd z = testutil::random_matrix(12, 1, 6, -1.0, 1.0);
  PosteriorTrace latent = fixed_trace(ModelKind::Count, two_coordinate_params(), 2, 20.0, z);
  latent.options.latent_jitter = 0.0;
  const ModelData counts = latent_data(train.x, CountResponse{std::vector<std::int64_t>(12, 1)});
  const PredictionResult lp = predictive_mean(latent, counts, train.x);
  CHECK((lp.latent - z).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((lp.y_hat - Eigen::VectorXd(z.array().exp())).cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("draw subsampling") {
  const ModelData train = oracle::regression_fixture(8, 3, 7);
  CHECK(predictive_mean(fixed_trace(ModelKind::Regression, two_coordinate_params(), 10), train, train.x).draws_used == 1);
  CHECK(predictive_mean(fixed_trace(ModelKind::Regression, two_coordinate_params(), 11), train, train.x).draws_used == 2);
  PredictOptions every;
  every.subsample = 1;
  CHECK(predictive_mean(fixed_trace(ModelKind::Regression, two_coordinate_params(), 10), train, train.x, every)
            .draws_used == 10);
}

TEST_CASE("single draw matches the dense formula") {
  const ModelData train = oracle::regression_fixture(10, 3, 8);
  const Eigen::MatrixXd test_x = testutil::random_matrix(4, 3, 9);
  const KernelParams params = two_coordinate_params();
  PosteriorTrace trace = fixed_trace(ModelKind::Regression, params, 1, 15.0);
  const Eigen::VectorXd& y = std::get<ContinuousResponse>(train.response).y;
  trace.y_mean = y.mean();
  PredictOptions all;
  all.threshold = 0.0;
  const PredictionResult pred = predictive_mean(trace, train, test_x, all);

  auto k = [&](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    const double g = std::pow(a[0] - b[0], 2) * -std::log(0.2) + std::pow(a[2] - b[2], 2) * -std::log(0.6);
    return 0.5 + std::exp(-g) / 0.8;
  };
  Eigen::MatrixXd c_xx(10, 10), c_fx(4, 10);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) c_xx(i, j) = k(train.x.row(i), train.x.row(j)) + (i == j ? 1.0 / 15.0 : 0.0);
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 10; ++j) c_fx(i, j) = k(test_x.row(i), train.x.row(j));
  }
  const Eigen::VectorXd dense = (c_fx * c_xx.inverse() * (y.array() - y.mean()).matrix()).array() + y.mean();
  CHECK((pred.y_hat - dense).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("relabelling excluded predictors changes nothing") {
  ModelData train = oracle::regression_fixture(10, 4, 10);
  Eigen::MatrixXd test_x = testutil::random_matrix(5, 4, 11);
  KernelParams params(KernelFamily::Exp1, 4);
  params.include(0, 0, {0.3});
  params.include(0, 2, {0.7});
  const PosteriorTrace trace = fixed_trace(ModelKind::Regression, params, 3);
  const Eigen::VectorXd base = predictive_mean(trace, train, test_x).y_hat;
  // swap the two excluded columns 1 and 3
  train.x.col(1).swap(train.x.col(3));
  test_x.col(1).swap(test_x.col(3));
  CHECK(predictive_mean(trace, train, test_x).y_hat == base);
}

TEST_CASE("empty selection falls back to the intercept") {
  const ModelData train = oracle::regression_fixture(8, 2, 12);
  PosteriorTrace trace = fixed_trace(ModelKind::Regression, KernelParams(KernelFamily::Exp1, 2), 4);
  trace.y_mean = 1.25;
  const PredictionResult pred = predictive_mean(trace, train, train.x);
  CHECK(pred.y_hat == Eigen::VectorXd::Constant(8, 1.25));
  CHECK(pred.warnings.size() == 1);
  CHECK(pred.selected[0] == std::vector<std::uint8_t>{0, 0});
}

TEST_CASE("selected set follows the threshold") {
  const ModelData train = oracle::regression_fixture(8, 3, 13);
  PosteriorTrace trace = fixed_trace(ModelKind::Regression, two_coordinate_params(), 4);
  trace.records[0].params.exclude(0, 2);
  trace.records[1].params.exclude(0, 2);
  trace.records[2].params.exclude(0, 2);
  const auto sel = selected_variables(trace, 0.5);
  CHECK(sel[0] == std::vector<std::uint8_t>{1, 0, 0});
  CHECK(selected_variables(trace, 0.25)[0] == std::vector<std::uint8_t>{1, 0, 1});
  CHECK_THROWS_AS(predictive_mean(trace, train, Eigen::MatrixXd::Zero(2, 2)), DataError);
}

TEST_CASE("classification rules") {
  const Eigen::MatrixXd x = testutil::random_matrix(6, 3, 14);
  const ModelData train = latent_data(x, BinaryResponse{{0, 1, 0, 1, 1, 0}});
  SUBCASE("ties go to zero") {
    for (auto model : {ModelKind::Logit, ModelKind::Probit}) {
      const PosteriorTrace trace = fixed_trace(model, two_coordinate_params(), 2, 20.0, Eigen::VectorXd::Zero(6));
      for (int label : classify(trace, train, x)) CHECK(label == 0);
    }
  }
  SUBCASE("large positive latent gives one") {
    for (auto model : {ModelKind::Logit, ModelKind::Probit}) {
      const PosteriorTrace trace =
          fixed_trace(model, two_coordinate_params(), 2, 20.0, Eigen::VectorXd::Constant(6, 25.0));
      for (int label : classify(trace, train, x)) CHECK(label == 1);
    }
  }
  SUBCASE("wrong model") {
    const PosteriorTrace trace = fixed_trace(ModelKind::Regression, two_coordinate_params(), 2);
    CHECK_THROWS_AS(classify(trace, train, x), ConfigError);
  }
}

TEST_CASE("separable clusters are classified") {
  Random rng(15);
  auto cluster_data = [&](std::size_t n) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 3);
    std::vector<int> t(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(i % 2);
      const auto r = static_cast<Eigen::Index>(i);
      x(r, 0) = t[i] ? 0.7 + 0.3 * rng.uniform() : 0.3 * rng.uniform();
      x(r, 1) = rng.uniform();
      x(r, 2) = rng.uniform();
    }
    return latent_data(x, BinaryResponse{t});
  };
  const ModelData train = cluster_data(60);
  const ModelData test = cluster_data(40);
  for (auto link : {BinaryLink::Logit, BinaryLink::Probit}) {
    SamplerConfig cfg;
    cfg.iters = 1500;
    cfg.burnin = 500;
    cfg.seed = 16;
    cfg.z_reps = 20;
    ModelOptions model;
    model.link = link;
    const PosteriorTrace trace = run_chain(cfg, train, PriorConfig{}, model);
    const double acc = accuracy(std::get<BinaryResponse>(test.response).t, classify(trace, train, test.x));
    CHECK(acc >= 0.9);
  }
}

TEST_CASE("kaplan meier") {
  Eigen::VectorXd time(4);
  time << 1, 2, 3, 4;
  Eigen::VectorXd grid(5);
  grid << 0.5, 1, 2, 3, 4;
  const Eigen::VectorXd km = kaplan_meier(time, {1, 1, 1, 1}, grid);
  CHECK(km[0] == 1.0);
  CHECK(km[1] == doctest::Approx(0.75));
  CHECK(km[2] == doctest::Approx(0.5));
  CHECK(km[3] == doctest::Approx(0.25));
  CHECK(km[4] == 0.0);

  const Eigen::VectorXd same = kaplan_meier(Eigen::VectorXd::Constant(3, 2.0), {1, 1, 1}, grid);
  CHECK(same[1] == 1.0);
  CHECK(same[2] == 0.0);

  Random rng(17);
  Eigen::VectorXd t(20);
  std::vector<int> e(20);
  for (int i = 0; i < 20; ++i) {
    t[i] = std::round(10.0 * rng.exponential()) / 4.0 + 0.25;
    e[static_cast<std::size_t>(i)] = rng.bernoulli(0.7) ? 1 : 0;
  }
  e[0] = 1;
  Eigen::VectorXd g(60);
  for (int i = 0; i < 60; ++i) g[i] = i * 0.2;
  const Eigen::VectorXd curve = kaplan_meier(t, e, g);
  for (int i = 0; i < 60; ++i) CHECK(curve[i] == doctest::Approx(km_oracle(t, e, g[i])).epsilon(1e-14));
  CHECK_THROWS_AS(kaplan_meier(time, {0, 0, 0, 0}, grid), DataError);
}

TEST_CASE("breslow hazard reduces to Nelson-Aalen at zero latent") {
  Eigen::VectorXd time(4);
  time << 2, 1, 4, 3;
  Eigen::VectorXd grid(3);
  grid << 0.5, 2.5, 10;
  const Eigen::VectorXd h = breslow_cumulative_hazard(time, {1, 1, 0, 1}, Eigen::VectorXd::Zero(4), grid);
  CHECK(h[0] == 0.0);
  CHECK(h[1] == doctest::Approx(1.0 / 4 + 1.0 / 3));
  CHECK(h[2] == doctest::Approx(1.0 / 4 + 1.0 / 3 + 1.0 / 2));
}

TEST_CASE("survivor curves") {
  const Eigen::MatrixXd x = testutil::random_matrix(8, 3, 18);
  Eigen::VectorXd time(8);
  time << 1.5, 0.4, 2.2, 3.1, 0.9, 4.0, 2.7, 1.1;
  const std::vector<int> event = {1, 1, 0, 1, 1, 0, 1, 1};
  const ModelData train = latent_data(x, SurvivalResponse{time, event});
  Eigen::VectorXd grid(30);
  for (int i = 0; i < 30; ++i) grid[i] = i * 0.13;

  SUBCASE("zero latent gives the baseline") {
    const PosteriorTrace trace = fixed_trace(ModelKind::Cox, two_coordinate_params(), 3, 20.0, Eigen::VectorXd::Zero(8));
    const SurvivorCurves sc = survivor_curve(trace, train, x, grid);
    for (Eigen::Index i = 0; i < 8; ++i) CHECK(sc.curves.row(i) == sc.baseline.transpose());
    CHECK(sc.baseline[0] == 1.0);
    CHECK(sc.warnings.empty());
  }
  SUBCASE("a common shift of the latent values leaves the curves unchanged") {
    PosteriorTrace base = fixed_trace(ModelKind::Cox, two_coordinate_params(), 3, 20.0, Eigen::VectorXd::Zero(8));
    PosteriorTrace shifted =
        fixed_trace(ModelKind::Cox, two_coordinate_params(), 3, 20.0, Eigen::VectorXd::Constant(8, 40.0));
    base.options.latent_jitter = 1e-9;
    shifted.options.latent_jitter = 1e-9;
    const SurvivorCurves a = survivor_curve(base, train, x, grid);
    const SurvivorCurves b = survivor_curve(shifted, train, x, grid);
    CHECK((a.curves - b.curves).cwiseAbs().maxCoeff() <= 1e-6);
  }
  SUBCASE("curves are monotone and start at one") {
    const Eigen::VectorXd z = testutil::random_matrix(8, 1, 19, -2.0, 2.0);
    Eigen::VectorXd wide(40);
    for (int i = 0; i < 40; ++i) wide[i] = i * 0.15;
    const PosteriorTrace trace = fixed_trace(ModelKind::Cox, two_coordinate_params(), 3, 20.0, z);
    const SurvivorCurves sc = survivor_curve(trace, train, x, wide);
    CHECK(sc.warnings.size() == 1);
    for (Eigen::Index i = 0; i < 8; ++i) {
      CHECK(sc.curves(i, 0) == 1.0);
      for (Eigen::Index g = 1; g < wide.size(); ++g) CHECK(sc.curves(i, g) <= sc.curves(i, g - 1));
    }
    CHECK(sc.average().size() == 40);
  }
}

TEST_CASE("metrics") {
  Eigen::VectorXd y(4), yh(4);
  y << 1, 2, 3, 4;
  const Metrics perfect = metrics(y, y);
  CHECK(perfect.normalized_mspe == 0.0);
  CHECK(perfect.rmspe == 0.0);
  CHECK(perfect.r2 == 1.0);
  CHECK(metrics(y, Eigen::VectorXd::Constant(4, 2.5)).normalized_mspe == doctest::Approx(1.0).epsilon(1e-15));
  yh << 1.5, 2, 2, 5;
  const Metrics m = metrics(y, yh);
  CHECK(std::abs(m.normalized_mspe - 0.45) <= 1e-12);
  CHECK(std::abs(m.rmspe - 0.75) <= 1e-12);
  CHECK(std::abs(m.r2 - 0.55) <= 1e-12);
  CHECK_THROWS_AS(metrics(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Zero(3)), NumericalError);
  CHECK(accuracy({1, 0, 1, 1}, {1, 1, 1, 0}) == 0.5);
}

#include "gpvs/error.hpp"
#include "gpvs/prior.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <doctest.h>

#include <cmath>

using namespace gpvs;

TEST_CASE("rho given gamma") {
  CHECK(logprior_rho_given_gamma(1.0, false, Slab::uniform()) == 0.0);
  for (double rho : {0.0, 0.3, 0.99}) CHECK(logprior_rho_given_gamma(rho, true, Slab::uniform()) == 0.0);
  CHECK(logprior_rho_given_gamma(0.5, true, Slab::beta(2, 2)) == doctest::Approx(std::log(1.5)).epsilon(1e-15));
  CHECK_THROWS_AS(logprior_rho_given_gamma(0.5, false, Slab::uniform()), ConfigError);
  CHECK_THROWS_AS(logprior_rho_given_gamma(1.5, true, Slab::uniform()), ConfigError);
  CHECK(logprior_rho_pair_given_gamma(0.2, 0.7, true, Slab::beta(2, 3)) ==
        logprior_rho_given_gamma(0.2, true, Slab::beta(2, 3)) + logprior_rho_given_gamma(0.7, true, Slab::beta(2, 3)));
}

TEST_CASE("joint spike and slab mass integrates to one") {
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double alpha = 0.025;
  for (const Slab& slab : {Slab::uniform(), Slab::beta(0.5, 0.5), Slab::beta(2, 2), Slab::beta(0.5, 2), Slab::beta(2, 1)}) {
    const double slab_mass = integrator.integrate(
        [&](double rho) { return std::exp(logprior_rho_given_gamma(rho, true, slab)); }, 0.0, 1.0);
    const double spike = std::exp(logprior_rho_given_gamma(1.0, false, slab));
    CHECK(std::abs((1.0 - alpha) * spike + alpha * slab_mass - 1.0) <= 1e-8);
  }
}

TEST_CASE("gamma vector prior") {
  InclusionPrior fixed;
  CHECK(logprior_gamma_vector(std::vector<std::uint8_t>(20, 0), fixed) ==
        doctest::Approx(20.0 * std::log(0.975)).epsilon(1e-14));
  std::vector<std::uint8_t> g(20, 0);
  const double before = logprior_gamma_vector(g, fixed);
  g[4] = 1;
  CHECK(logprior_gamma_vector(g, fixed) - before == doctest::Approx(std::log(0.025 / 0.975)).epsilon(1e-12));

  InclusionPrior per;
  per.alphas = {0.1, 0.5, 0.9};
  CHECK(logprior_gamma_vector({1, 0, 1}, per) ==
        doctest::Approx(std::log(0.1) + std::log(0.5) + std::log(0.9)).epsilon(1e-14));

  InclusionPrior bb;
  bb.kind = InclusionPrior::Kind::BetaBernoulli;
  const double a = 0.05, b = 1.95;
  const double norm = std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  boost::math::quadrature::tanh_sinh<double> integrator;
  for (int k = 0; k <= 4; ++k) {
    std::vector<std::uint8_t> gamma(4, 0);
    for (int j = 0; j < k; ++j) gamma[static_cast<std::size_t>(j)] = 1;
    const double mass = integrator.integrate(
        [&](double al) { return std::pow(al, k + a - 1.0) * std::pow(1.0 - al, 4 - k + b - 1.0) / norm; }, 0.0, 1.0);
    CHECK(std::abs(logprior_gamma_vector(gamma, bb) - std::log(mass)) <= 1e-10);
  }
}

TEST_CASE("gamma densities") {
  for (double x : {0.1, 1.0, 4.0}) CHECK(logprior_positive(x, 1.0, 1.0) == doctest::Approx(-x).epsilon(1e-15));
  // Gamma(2, 0.1): density 0.01 x exp(-0.1 x), mode at 10
  CHECK(logprior_positive(10.0, 2.0, 0.1) == doctest::Approx(std::log(0.1 * std::exp(-1.0))).epsilon(1e-14));
  CHECK(logprior_positive(10.0, 2.0, 0.1) > logprior_positive(9.0, 2.0, 0.1));
  CHECK(logprior_positive(10.0, 2.0, 0.1) > logprior_positive(11.0, 2.0, 0.1));

  boost::math::quadrature::exp_sinh<double> integrator;
  const double z = integrator.integrate([](double x) { return x * x * std::exp(-2.0 * x); });
  const double expected = 1.7 * 1.7 * std::exp(-3.4) / z;
  CHECK(std::abs(std::exp(logprior_positive(1.7, 3.0, 2.0)) - expected) <= 1e-10);
  CHECK_THROWS_AS(logprior_positive(0.0, 1.0, 1.0), ConfigError);
}

TEST_CASE("separate selection sets factorize") {
  KernelParams params(KernelFamily::Exp2Separate, 3);
  params.include(0, 0, {0.4});
  params.include(1, 2, {0.2});
  params.include(1, 1, {0.8});
  PriorConfig prior;
  prior.slab = Slab::beta(2.0, 0.5);
  double expected = 0.0;
  for (std::size_t s = 0; s < 2; ++s) {
    expected += logprior_gamma_vector(params.gamma(s), prior.inclusion);
    for (std::size_t k = 0; k < 3; ++k) {
      expected += logprior_rho_given_gamma(params.rho(s, k), params.included(s, k), prior.slab);
    }
  }
  CHECK(logprior_selection(params, prior) == expected);
}

TEST_CASE("precision priors") {
  KernelParams params(KernelFamily::Matern, 2);
  params.set_lambda_a(2.0);
  params.set_lambda_z(0, 0.5);
  params.set_nu(1.5);
  PriorConfig prior;
  CHECK(logprior_precisions(params, prior) == doctest::Approx(-2.0 - 0.5 - 1.5).epsilon(1e-15));
  CHECK(prior.r.mean() == 20.0);
}

TEST_CASE("config validation") {
  PriorConfig ok;
  CHECK_NOTHROW(ok.validate(3));
  PriorConfig bad = ok;
  bad.inclusion.alpha = 1.0;
  CHECK_THROWS_AS(bad.validate(3), ConfigError);
  bad = ok;
  bad.slab = Slab::beta(0.0, 1.0);
  CHECK_THROWS_AS(bad.validate(3), ConfigError);
  bad = ok;
  bad.r.rate = -1.0;
  CHECK_THROWS_AS(bad.validate(3), ConfigError);
  bad = ok;
  bad.inclusion.alphas = {0.1, 0.2};
  CHECK_THROWS_AS(bad.validate(3), ConfigError);
}

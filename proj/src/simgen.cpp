#include "gpvs/simgen.hpp"

#include "gpvs/error.hpp"
#include "gpvs/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace gpvs {

std::string to_string(SimKernel k) {
  switch (k) {
    case SimKernel::Small4: return "small4";
    case SimKernel::LargeP: return "largep";
    case SimKernel::MixedNonlinear: return "mixed";
    case SimKernel::Sensitivity: return "sensitivity";
  }
  return "?";
}

SimKernel parse_sim_kernel(const std::string& s) {
  if (s == "small4") return SimKernel::Small4;
  if (s == "largep") return SimKernel::LargeP;
  if (s == "mixed") return SimKernel::MixedNonlinear;
  if (s == "sensitivity") return SimKernel::Sensitivity;
  throw ConfigError("unknown simulation kernel '" + s + "' (expected small4, largep, mixed, sensitivity)");
}

std::size_t active_count(SimKernel k) {
  switch (k) {
    case SimKernel::Small4: return 4;
    case SimKernel::LargeP: return 6;
    default: return 8;
  }
}

double SimSpec::noise_sd() const {
  if (sigma) return *sigma;
  return kernel == SimKernel::Sensitivity ? 0.28 : 0.05;
}

void SimSpec::validate() const {
  if (n < 2) throw ConfigError("simulation needs n >= 2");
  if (p < active_count(kernel)) {
    throw ConfigError("simulation kernel " + to_string(kernel) + " needs p >= " +
                      std::to_string(active_count(kernel)));
  }
  if (!(noise_sd() > 0.0)) throw ConfigError("sigma must be positive");
  if (!(censor_rate >= 0.0 && censor_rate < 1.0)) throw ConfigError("censor rate must lie in [0,1)");
  if (!(baseline_rate > 0.0)) throw ConfigError("baseline rate must be positive");
  if (correlation) {
    if (!(*correlation > 0.0 && *correlation < 1.0)) throw ConfigError("correlation must lie in (0,1)");
    if (p < active_count(kernel) + correlated_count) throw ConfigError("not enough nuisance columns to correlate");
    if (kernel == SimKernel::Small4) throw ConfigError("correlation option needs a kernel with an x6 term");
  }
}

namespace {

std::array<double, 8> largep_coefficients(ResponseKind response) {
  switch (response) {
    case ResponseKind::Count: return {1.6, 1.6, 1.6, 1.6, 1.0, 3.0, 1.0, 5.0};
    case ResponseKind::Survival: return {3.0, -2.5, 3.5, -3.0, 1.0, 3.0, -1.0, 5.0};
    default: return {1.0, 1.0, 1.0, 1.0, 1.0, 3.0, 1.0, 5.0};
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double surface(SimKernel k, ResponseKind response, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  switch (k) {
    case SimKernel::Small4: return x[0] + x[1] + std::sin(3.0 * x[2]) + std::sin(5.0 * x[3]);
    case SimKernel::LargeP: {
      const auto a = largep_coefficients(response);
      return a[0] * x[0] + a[1] * x[1] + a[2] * x[2] + a[3] * x[3] + a[4] * std::sin(a[5] * x[4]) +
             a[6] * std::sin(a[7] * x[5]);
    }
    case SimKernel::MixedNonlinear:
      return x[0] + 0.8 * x[1] + 1.3 * x[2] + std::sin(x[3]) + std::sin(3.0 * x[4]) + std::sin(5.0 * x[5]) +
             (1.5 * x[6]) * (1.5 * x[7]);
    case SimKernel::Sensitivity:
      return x[0] + x[1] + std::sin(1.5 * x[2]) * std::sin(1.5 * x[3]) + std::sin(3.0 * x[4]) +
             std::sin(3.0 * x[5]) + (1.5 * x[6]) * (1.5 * x[7]);
  }
  return 0.0;
}

SimResult generate(const SimSpec& spec) {
  spec.validate();
  Random rng(spec.seed);
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto p = static_cast<Eigen::Index>(spec.p);
  SimResult out;

  if (spec.correlation) {
    std::vector<std::size_t> pool(spec.p - active_count(spec.kernel));
    std::iota(pool.begin(), pool.end(), active_count(spec.kernel));
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    out.correlated.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.correlated_count));
    std::sort(out.correlated.begin(), out.correlated.end());
  }

  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < p; ++k) x(i, k) = rng.uniform();
  }
  if (spec.correlation) {
    // Shared normal factor gives pairwise latent correlation c among x6 and
    // the chosen columns; the normal CDF maps back to U(0,1) marginals.
    const double c = *spec.correlation;
    std::vector<std::size_t> group = out.correlated;
    group.push_back(5);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double shared = rng.normal();
      for (auto k : group) {
        const double w = std::sqrt(c) * shared + std::sqrt(1.0 - c) * rng.normal();
        x(i, static_cast<Eigen::Index>(k)) = std::clamp(normal_cdf(w), 0.0, 1.0);
      }
    }
  }

  out.latent.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.latent[i] = surface(spec.kernel, spec.response, x.row(i));
  const double sd = spec.noise_sd();

  switch (spec.response) {
    case ResponseKind::Continuous: {
      ContinuousResponse r;
      r.y.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) r.y[i] = out.latent[i] + sd * rng.normal();
      out.data.response = std::move(r);
      break;
    }
    case ResponseKind::Binary: {
      BinaryResponse r;
      const double centre = out.latent.mean();
      for (Eigen::Index i = 0; i < n; ++i) r.t.push_back(out.latent[i] - centre + sd * rng.normal() > 0.0 ? 1 : 0);
      out.data.response = std::move(r);
      break;
    }
    case ResponseKind::Count: {
      CountResponse r;
      for (Eigen::Index i = 0; i < n; ++i) r.s.push_back(rng.poisson(std::exp(out.latent[i])));
      out.data.response = std::move(r);
      break;
    }
    case ResponseKind::Survival: {
      SurvivalResponse r;
      r.time.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t_event = rng.exponential() / (spec.baseline_rate * std::exp(out.latent[i]));
        if (rng.bernoulli(spec.censor_rate)) {
          r.time[i] = t_event * rng.uniform();
          r.event.push_back(0);
        } else {
          r.time[i] = t_event;
          r.event.push_back(1);
        }
      }
      out.data.response = std::move(r);
      break;
    }
  }

  out.data.x = std::move(x);
  out.data.column_mins = Eigen::VectorXd::Zero(p);
  out.data.column_ranges = Eigen::VectorXd::Ones(p);
  for (Eigen::Index k = 0; k < p; ++k) out.data.column_names.push_back("x" + std::to_string(k + 1));
  for (std::size_t k = 0; k < active_count(spec.kernel); ++k) out.truth.push_back(k);
  return out;
}

std::pair<ModelData, ModelData> split_train_test(const ModelData& data, std::size_t n_train) {
  if (n_train == 0 || n_train >= data.n()) throw ConfigError("train size must lie strictly between 0 and n");
  std::vector<std::size_t> a(n_train), b(data.n() - n_train);
  std::iota(a.begin(), a.end(), std::size_t{0});
  std::iota(b.begin(), b.end(), n_train);
  return {subset_rows(data, a), subset_rows(data, b)};
}

}  // namespace gpvs

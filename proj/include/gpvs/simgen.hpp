#pragma once

#include "gpvs/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gpvs {

/// Synthetic response surfaces.
///   Small4:         x1 + x2 + sin(3 x3) + sin(5 x4)
///   LargeP:         a1 x1 + a2 x2 + a3 x3 + a4 x4 + a5 sin(a6 x5) + a7 sin(a8 x6),
///                   coefficients chosen by response kind
///   MixedNonlinear: x1 + 0.8 x2 + 1.3 x3 + sin(x4) + sin(3 x5) + sin(5 x6) + (1.5 x7)(1.5 x8)
///   Sensitivity:    x1 + x2 + sin(1.5 x3) sin(1.5 x4) + sin(3 x5) + sin(3 x6) + (1.5 x7)(1.5 x8)
enum class SimKernel { Small4, LargeP, MixedNonlinear, Sensitivity };

std::string to_string(SimKernel k);
SimKernel parse_sim_kernel(const std::string& s);

struct SimSpec {
  SimKernel kernel = SimKernel::Small4;
  std::size_t n = 80;
  std::size_t p = 20;
  /// Noise sd for continuous and binary responses; default per kernel when unset.
  std::optional<double> sigma;
  std::uint64_t seed = 1;
  ResponseKind response = ResponseKind::Continuous;
  double censor_rate = 0.05;
  double baseline_rate = 0.2;
  /// Gaussian-copula correlation between x6 and `correlated_count` random nuisance columns.
  std::optional<double> correlation;
  std::size_t correlated_count = 20;

  void validate() const;
  double noise_sd() const;
};

struct SimResult {
  ModelData data;
  std::vector<std::size_t> truth;       // 0-based indices of active predictors
  Eigen::VectorXd latent;               // noise-free surface at each row
  std::vector<std::size_t> correlated;  // nuisance columns tied to x6, if any
};

std::size_t active_count(SimKernel k);

/// Noise-free surface at one row of predictors.
double surface(SimKernel k, ResponseKind response, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// Covariates are i.i.d. U(0,1) (stored as-is with identity scaling).
/// Continuous adds N(0, sigma^2) noise; Binary thresholds the centred surface
/// plus noise at 0; Count draws Poisson(exp(y)); Survival draws
/// t = M / (baseline_rate exp(y)), M ~ Exp(1), and censors each row with
/// probability censor_rate, replacing t by U(0, t).
SimResult generate(const SimSpec& spec);

/// First `n_train` rows and the remainder, as two data sets.
std::pair<ModelData, ModelData> split_train_test(const ModelData& data, std::size_t n_train);

}  // namespace gpvs

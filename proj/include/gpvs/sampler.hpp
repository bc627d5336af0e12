#pragma once

#include "gpvs/dataset.hpp"
#include "gpvs/kernel.hpp"
#include "gpvs/likelihood.hpp"
#include "gpvs/prior.hpp"
#include "gpvs/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gpvs {

enum class BinaryLink { Logit, Probit };
enum class ModelKind { Regression, Logit, Probit, Count, Cox };

std::string to_string(ModelKind m);
std::string to_string(BinaryLink l);
BinaryLink parse_binary_link(const std::string& s);
ModelKind model_kind(ResponseKind response, BinaryLink link);
/// True when the model carries an explicit latent vector z in its state.
bool has_latent(ModelKind m);

/// Model choices beyond the data: kernel family, binary link and the
/// constants that pin down otherwise unidentified pieces.
struct ModelOptions {
  KernelFamily family = KernelFamily::Exp1;
  BinaryLink link = BinaryLink::Logit;
  /// Variance of the independent noise added to C for latent models
  /// (count, Cox, logit): z ~ N(0, C + latent_jitter I).
  double latent_jitter = 0.1;
  /// Intercept precision used for the Cox model, where it is held fixed.
  double cox_lambda_a = 1000.0;
};

enum class Scheme { One, Two, TwoAdaptive };
/// Scheme 1 Keep move: redraw each included rho with its own accept step,
/// or redraw all of them together under one accept step.
enum class KeepMode { PerCoordinate, Joint };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);
std::string to_string(KeepMode k);
KeepMode parse_keep_mode(const std::string& s);

struct SamplerConfig {
  Scheme scheme = Scheme::Two;
  std::size_t iters = 5000;
  std::size_t burnin = 2500;
  std::size_t thin = 1;
  std::size_t z_reps = 10;                 // consecutive latent proposals per iteration
  double z_step = 0.3;                     // epsilon in z' = sqrt(1-eps^2) z + eps L u
  double lambda_proposal_shape = 10.0;     // Gamma proposal shape for precisions and h
  double nu_proposal_sd = 0.2;             // log-normal proposal for nu
  bool autotune = true;                    // adapt the above toward 40-60% during burn-in
  std::optional<double> projection;        // knot ratio m/n
  std::uint64_t seed = 1;
  KeepMode keep = KeepMode::PerCoordinate;
  std::size_t adapt_warmup = 100;
  bool sample_gamma = true;
  bool sample_rho = true;
  bool sample_precisions = true;
  bool sample_nuisance = true;
  bool disable_likelihood = false;         // sample the prior (diagnostic)
  bool record_latent = true;
  bool record_moves = true;

  void validate() const;
};

enum class MoveType : std::uint8_t { Add, Delete, Swap, Keep, Between, Within };
std::string to_string(MoveType m);

struct MoveRecord {
  std::uint32_t iteration = 0;
  MoveType type = MoveType::Between;
  std::uint8_t set = 0;
  bool accepted = false;
  std::int32_t unit = -1;   // coordinate changed (added, for Swap)
  std::int32_t unit2 = -1;  // coordinate deleted by Swap
};

struct AcceptanceCounter {
  std::uint64_t proposed = 0;
  std::uint64_t accepted = 0;
  double rate() const { return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed); }
};

struct TraceRecord {
  std::size_t iteration = 0;
  KernelParams params;
  NuisanceBlock h;
  Eigen::VectorXd z;   // latent models only, at training inputs
  double cpu_seconds = 0.0;  // chain CPU time when recorded
};

struct PosteriorTrace {
  ModelKind model = ModelKind::Regression;
  ModelOptions options;
  std::size_t p = 0;
  std::size_t iters = 0;
  std::size_t burnin = 0;
  std::size_t thin = 1;
  double y_mean = 0.0;  // regression responses are centred before fitting
  std::vector<std::vector<std::uint8_t>> initial_gamma;
  std::vector<TraceRecord> records;
  std::vector<MoveRecord> moves;
  std::map<std::string, AcceptanceCounter> acceptance;
  std::vector<Eigen::Index> knots;
  std::vector<std::string> warnings;
  double cpu_seconds = 0.0;
  double wall_seconds = 0.0;
};

/// Starting point for a chain; when absent the prior-based initialisation is used.
struct ChainInit {
  KernelParams params;
  NuisanceBlock h;
  LatentState latent;
};

/// Running inclusion frequencies for the adaptive gamma proposal.
class InclusionAdapter {
 public:
  explicit InclusionAdapter(std::size_t p = 0) : mean_(p, 0.0) {}
  /// Fold in one gamma sample with weight 1/t.
  void observe(const std::vector<std::uint8_t>& gamma);
  /// Proposal probability for coordinate k, clamped to [0.01, 0.99].
  double alpha(std::size_t k) const;
  std::size_t count() const { return count_; }

 private:
  std::vector<double> mean_;
  std::size_t count_ = 0;
};

/// Clamped running mean of gamma_k over a history of samples.
double adapt_alpha(const std::vector<std::vector<std::uint8_t>>& history, std::size_t k);

struct LatentStepStats {
  std::size_t proposed = 0;
  std::size_t accepted = 0;
};

/// `reps` proposals z' = sqrt(1-eps^2) z + eps L u with L the factor of the
/// prior covariance, each accepted with the data likelihood ratio.
LatentStepStats update_latent_z(Eigen::VectorXd& z, const CholeskyFactor& prior_cov, double eps, std::size_t reps,
                                const std::function<double(const Eigen::VectorXd&)>& loglik, Random& rng);

/// One Markov chain. Owns its state and random stream; not thread-safe.
class Chain {
 public:
  Chain(const ModelData& data, const ModelOptions& model, const PriorConfig& prior, const SamplerConfig& config,
        const std::optional<ChainInit>& init = std::nullopt);
  ~Chain();
  Chain(Chain&&) noexcept;
  Chain& operator=(Chain&&) noexcept;

  /// Add / Delete / Swap followed by Keep, once per selection set.
  void scheme1_step();
  /// Between and Within moves for every coordinate of every selection set.
  void scheme2_sweep(bool adaptive);
  void update_precisions();
  /// r (regression), tau (count), nu (Matern).
  void update_nuisance();
  /// Latent z (count, Cox, logit) or the probit z / augmentation pair.
  void update_latent();
  /// One full iteration in the configured scheme, including bookkeeping.
  void iterate();

  std::size_t iteration() const;
  const KernelParams& params() const;
  const NuisanceBlock& nuisance() const;
  const LatentState& latent() const;
  /// Latent values at the training inputs (projected up under knots).
  Eigen::VectorXd latent_at_data() const;
  ChainInit snapshot() const;
  /// Current covariance of the latent GP at the training inputs.
  Eigen::MatrixXd covariance() const;
  /// Log-likelihood part of the target that depends on the covariance.
  double covariance_loglik() const;

  const std::vector<MoveRecord>& moves() const;
  const std::map<std::string, AcceptanceCounter>& acceptance() const;
  double z_step() const;

  /// Runs the configured iterations and returns the retained trace.
  PosteriorTrace run();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

PosteriorTrace run_chain(const SamplerConfig& config, const ModelData& data, const PriorConfig& prior,
                         const ModelOptions& model = {}, const std::optional<ChainInit>& init = std::nullopt);

/// Fraction of retained iterations with gamma_k = 1 in selection set `set`.
std::vector<double> marginal_inclusion(const PosteriorTrace& trace, std::size_t set = 0);

/// 1 + 2 sum of sample autocorrelations up to the first non-positive lag.
double autocorrelation_time(const std::vector<double>& samples);

/// samples.size() / autocorrelation_time(samples).
double effective_sample_size(const std::vector<double>& samples);

/// Values of rho_k (term `term`) across the retained records.
std::vector<double> rho_series(const PosteriorTrace& trace, std::size_t term, std::size_t k);

}  // namespace gpvs

#pragma once

#include "gpvs/dataset.hpp"
#include "gpvs/kernel.hpp"
#include "gpvs/prior.hpp"
#include "gpvs/sampler.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gpvs::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

/// Environment variable holding the default output directory.
inline constexpr const char* kOutputDirEnv = "GPVS_OUTPUT_DIR";

/// Gamma hyperprior (a, b). b is a rate unless the config selects the scale
/// convention, in which case it is converted when the prior is built.
struct GammaSetting {
  double a = 1.0;
  double b = 1.0;
};

/// Everything a fit needs, settable through `key=value` pairs.
///
/// Keys that do not apply to the chosen model or kernel (for example
/// `nu_prior` without the Matern kernel) are rejected by validate() when set
/// explicitly. to_text() writes only the keys that apply, so its output can
/// be fed back in unchanged.
struct RunConfig {
  std::string model = "regression";  // regression, logit, probit, count, cox
  KernelFamily kernel = KernelFamily::Exp1;
  std::string input;
  std::string test;
  double holdout = 0.0;   // trailing fraction of rows held out when `test` is empty
  std::string response;   // empty: "y", or "time" for cox
  std::string event = "event";
  Scaling scaling = Scaling::UnitCube;
  std::size_t chains = 1;

  SamplerConfig sampler;
  double latent_jitter = ModelOptions{}.latent_jitter;
  double cox_lambda_a = ModelOptions{}.cox_lambda_a;

  Slab slab;
  InclusionPrior inclusion;
  bool scale_convention = false;
  std::map<std::string, GammaSetting> gamma_priors;  // lambda_a, lambda_z, lambda_z2, r, tau, nu

  std::set<std::string> explicit_keys;

  RunConfig();

  /// Throws ConfigError on an unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);
  /// Cross-field checks; throws ConfigError.
  void validate() const;
  /// Whether `key` has any effect under the current model, kernel and scheme.
  bool applies(const std::string& key) const;
  std::string value_of(const std::string& key) const;
  std::string to_text() const;

  ResponseKind response_kind() const;
  ResponseSpec response_spec() const;
  PriorConfig prior_config() const;
  ModelOptions model_options() const;
};

/// All recognised keys in canonical order.
const std::vector<std::string>& config_keys();

/// Applies `key=value` lines; blank lines and lines starting with '#' are skipped.
void apply_config_text(RunConfig& cfg, const std::string& text);
RunConfig load_config(const std::string& path);

/// Training rows (normalized) and, when configured, test rows scaled with the
/// training constants.
struct PreparedData {
  ModelData train;
  std::optional<ModelData> test;
};
PreparedData prepare_data(const RunConfig& cfg, const std::string& test_override = "");

/// Runs cfg.chains chains in parallel; chain i uses chain_seed(cfg.sampler.seed, i).
std::vector<PosteriorTrace> fit_chains(const RunConfig& cfg, const ModelData& train);

/// One row per retained iteration: iteration, gamma_k, rho_k (and the second
/// term's columns when present), precisions, r, tau, nu (Matern) and z_i
/// (latent models). Doubles are written so that they read back bit-exactly.
void write_trace_csv(const std::string& path, const PosteriorTrace& trace);
/// Reads records, p and the kernel family. The model kind is inferred from the
/// nuisance columns; options and y_mean are left for the caller.
PosteriorTrace read_trace_csv(const std::string& path);
void write_moves_csv(const std::string& path, const PosteriorTrace& trace);

/// Entry point shared by the executable and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gpvs::cli

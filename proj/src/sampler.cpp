#include "gpvs/sampler.hpp"

#include "gpvs/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numeric>

namespace gpvs {

// ---------------------------------------------------------------------------
// Names

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::Regression: return "regression";
    case ModelKind::Logit: return "logit";
    case ModelKind::Probit: return "probit";
    case ModelKind::Count: return "count";
    case ModelKind::Cox: return "cox";
  }
  return "?";
}

std::string to_string(BinaryLink l) { return l == BinaryLink::Logit ? "logit" : "probit"; }

BinaryLink parse_binary_link(const std::string& s) {
  if (s == "logit") return BinaryLink::Logit;
  if (s == "probit") return BinaryLink::Probit;
  throw ConfigError("unknown binary link '" + s + "' (expected logit or probit)");
}

ModelKind model_kind(ResponseKind response, BinaryLink link) {
  switch (response) {
    case ResponseKind::Continuous: return ModelKind::Regression;
    case ResponseKind::Binary: return link == BinaryLink::Logit ? ModelKind::Logit : ModelKind::Probit;
    case ResponseKind::Count: return ModelKind::Count;
    case ResponseKind::Survival: return ModelKind::Cox;
  }
  return ModelKind::Regression;
}

bool has_latent(ModelKind m) { return m != ModelKind::Regression; }

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::One: return "1";
    case Scheme::Two: return "2";
    case Scheme::TwoAdaptive: return "2a";
  }
  return "?";
}

Scheme parse_scheme(const std::string& s) {
  if (s == "1" || s == "one") return Scheme::One;
  if (s == "2" || s == "two") return Scheme::Two;
  if (s == "2a" || s == "adaptive") return Scheme::TwoAdaptive;
  throw ConfigError("unknown scheme '" + s + "' (expected 1, 2 or 2a)");
}

std::string to_string(KeepMode k) { return k == KeepMode::PerCoordinate ? "per-coordinate" : "joint"; }

KeepMode parse_keep_mode(const std::string& s) {
  if (s == "per-coordinate") return KeepMode::PerCoordinate;
  if (s == "joint") return KeepMode::Joint;
  throw ConfigError("unknown keep mode '" + s + "' (expected per-coordinate or joint)");
}

std::string to_string(MoveType m) {
  switch (m) {
    case MoveType::Add: return "add";
    case MoveType::Delete: return "delete";
    case MoveType::Swap: return "swap";
    case MoveType::Keep: return "keep";
    case MoveType::Between: return "between";
    case MoveType::Within: return "within";
  }
  return "?";
}

void SamplerConfig::validate() const {
  if (iters == 0) throw ConfigError("iters must be positive");
  if (burnin >= iters) throw ConfigError("burnin must be smaller than iters");
  if (thin == 0) throw ConfigError("thin must be at least 1");
  if (z_reps == 0) throw ConfigError("z_reps must be at least 1");
  if (!(z_step > 0.0 && z_step <= 1.0)) throw ConfigError("z_step must lie in (0,1]");
  if (!(lambda_proposal_shape > 0.0)) throw ConfigError("lambda_proposal_shape must be positive");
  if (!(nu_proposal_sd > 0.0)) throw ConfigError("nu_proposal_sd must be positive");
  if (projection && !(*projection > 0.0 && *projection < 1.0)) {
    throw ConfigError("projection ratio must lie in (0,1)");
  }
}

// ---------------------------------------------------------------------------
// Adaptation and latent moves

void InclusionAdapter::observe(const std::vector<std::uint8_t>& gamma) {
  ++count_;
  const double w = 1.0 / static_cast<double>(count_);
  for (std::size_t k = 0; k < mean_.size(); ++k) mean_[k] += w * ((gamma[k] ? 1.0 : 0.0) - mean_[k]);
}

double InclusionAdapter::alpha(std::size_t k) const { return std::clamp(mean_[k], 0.01, 0.99); }

double adapt_alpha(const std::vector<std::vector<std::uint8_t>>& history, std::size_t k) {
  if (history.empty()) return 0.01;
  double mean = 0.0;
  for (const auto& g : history) mean += g[k] ? 1.0 : 0.0;
  return std::clamp(mean / static_cast<double>(history.size()), 0.01, 0.99);
}

namespace {

bool metropolis(double log_alpha, Random& rng) {
  if (std::isnan(log_alpha)) return false;
  if (log_alpha >= 0.0) return true;
  return std::log(rng.uniform()) < log_alpha;
}

Eigen::VectorXd normals(Eigen::Index n, Random& rng) {
  Eigen::VectorXd u(n);
  for (Eigen::Index i = 0; i < n; ++i) u[i] = rng.normal();
  return u;
}

}  // namespace

LatentStepStats update_latent_z(Eigen::VectorXd& z, const CholeskyFactor& prior_cov, double eps, std::size_t reps,
                                const std::function<double(const Eigen::VectorXd&)>& loglik, Random& rng) {
  LatentStepStats stats;
  double current = loglik(z);
  const double shrink = std::sqrt(1.0 - eps * eps);
  for (std::size_t r = 0; r < reps; ++r) {
    Eigen::VectorXd proposal = shrink * z + eps * prior_cov.lower_times(normals(z.size(), rng));
    const double ll = loglik(proposal);
    ++stats.proposed;
    if (metropolis(ll - current, rng)) {
      z = std::move(proposal);
      current = ll;
      ++stats.accepted;
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Chain internals

namespace {

/// Unscaled kernel matrices of every term for one pair of input sets. For
/// the Matern family the rho-weighted distances per unique row are kept too.
struct BlockState {
  std::vector<Eigen::MatrixXd> terms;
  std::vector<Eigen::VectorXd> dist;
};

struct RhoChange {
  std::size_t term;
  std::size_t k;
  double old_rho;
  double new_rho;
};

double weight_of(double rho) { return rho >= 1.0 ? 0.0 : -std::log(rho); }

Eigen::MatrixXd matern_expand(const DistanceCache& cache, const Eigen::VectorXd& dist, double nu) {
  Eigen::VectorXd v(dist.size());
  for (Eigen::Index i = 0; i < dist.size(); ++i) v[i] = matern_correlation(dist[i], nu);
  return cache.expand(v);
}

BlockState build_block(const DistanceCache& cache, const KernelParams& params) {
  BlockState b;
  for (std::size_t t = 0; t < params.terms(); ++t) {
    if (params.family() == KernelFamily::Matern) {
      b.dist.push_back(cache.weighted(rho_weights(params.rho(t))));
      b.terms.push_back(matern_expand(cache, b.dist.back(), params.nu()));
    } else {
      b.terms.push_back(term_kernel(cache, params.rho(t), params.family(), params.nu()));
    }
  }
  return b;
}

void apply_change(BlockState& b, const DistanceCache& cache, const KernelParams& proposed, const RhoChange& c) {
  if (c.old_rho == c.new_rho) return;
  const std::size_t t = c.term;
  if (proposed.family() == KernelFamily::Matern) {
    const double w_old = weight_of(c.old_rho);
    const double w_new = weight_of(c.new_rho);
    if (std::isinf(w_old) || std::isinf(w_new)) {
      b.dist[t] = cache.weighted(rho_weights(proposed.rho(t)));
    } else {
      b.dist[t] += (w_new - w_old) * cache.unique_rows().col(static_cast<Eigen::Index>(c.k));
    }
    b.terms[t] = matern_expand(cache, b.dist[t], proposed.nu());
  } else if (c.old_rho > 0.0) {
    b.terms[t].array() *= rho_change_factor(cache, c.k, c.new_rho, c.old_rho).array();
  } else {
    b.terms[t] = term_kernel(cache, proposed.rho(t), proposed.family(), proposed.nu());
  }
}

Eigen::MatrixXd compose(const BlockState& b, const KernelParams& params) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(b.terms[0].rows(), b.terms[0].cols(), 1.0 / params.lambda_a());
  for (std::size_t t = 0; t < b.terms.size(); ++t) c += b.terms[t] / params.lambda_z(t);
  return c;
}

std::size_t legal_move_count(std::size_t included, std::size_t p) {
  std::size_t n = 0;
  if (included < p) ++n;                   // Add
  if (included > 0) ++n;                   // Delete
  if (included > 0 && included < p) ++n;  // Swap
  return n;
}

double cpu_now() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

}  // namespace

struct Chain::Impl {
  const ModelData& data;
  ModelOptions model;
  PriorConfig prior;
  SamplerConfig cfg;
  ModelKind kind;
  Random rng;

  KernelParams params;
  NuisanceBlock h;
  LatentState latent;

  Eigen::VectorXd y;  // centred continuous response
  double y_mean = 0.0;
  bool projected = false;
  std::vector<Eigen::Index> knots;
  std::vector<DistanceCache> caches;  // {train x train} or {knots x knots, knots x train}
  std::vector<BlockState> blocks;
  bool lambda_a_fixed = false;

  std::vector<InclusionAdapter> adapters;
  std::size_t iter = 0;
  std::vector<MoveRecord> moves;
  std::map<std::string, AcceptanceCounter> acceptance;
  std::map<std::string, AcceptanceCounter> window;
  double eps;
  std::map<std::string, double> shape;
  double nu_sd;

  Impl(const ModelData& d, const ModelOptions& m, const PriorConfig& pr, const SamplerConfig& c,
       const std::optional<ChainInit>& init)
      : data(d), model(m), prior(pr), cfg(c), kind(model_kind(d.kind(), m.link)), rng(c.seed), eps(c.z_step),
        nu_sd(c.nu_proposal_sd) {
    cfg.validate();
    data.validate();
    prior.validate(data.p());
    if (!(model.latent_jitter >= 0.0)) throw ConfigError("latent_jitter must be non-negative");
    if (!(model.cox_lambda_a > 0.0)) throw ConfigError("cox_lambda_a must be positive");
    if (cfg.projection && kind == ModelKind::Probit) {
      throw ConfigError("knot projection is not available for the probit model");
    }
    lambda_a_fixed = kind == ModelKind::Cox;
    for (const char* name : {"lambda_a", "lambda_z", "lambda_z2", "r", "tau"}) shape[name] = cfg.lambda_proposal_shape;

    if (kind == ModelKind::Regression) {
      const auto& yy = std::get<ContinuousResponse>(data.response).y;
      y_mean = yy.mean();
      y = yy.array() - y_mean;
    }

    const Eigen::Index n = data.x.rows();
    if (cfg.projection) {
      const auto m = static_cast<Eigen::Index>(std::llround(*cfg.projection * static_cast<double>(n)));
      knots = select_knots(n, std::clamp<Eigen::Index>(m, 1, n - 1), chain_seed(cfg.seed, 1000));
      std::sort(knots.begin(), knots.end());
      Eigen::MatrixXd xk(static_cast<Eigen::Index>(knots.size()), data.x.cols());
      for (std::size_t i = 0; i < knots.size(); ++i) xk.row(static_cast<Eigen::Index>(i)) = data.x.row(knots[i]);
      caches.push_back(build_cache(xk, xk));
      caches.push_back(build_cache(xk, data.x));
      projected = true;
    } else {
      caches.push_back(build_cache(data.x, data.x));
    }
    const Eigen::Index latent_size = projected ? static_cast<Eigen::Index>(knots.size()) : n;

    if (init) {
      params = init->params;
      h = init->h;
      latent = init->latent;
      if (params.p() != data.p() || params.family() != model.family) {
        throw ConfigError("initial state does not match the data or kernel family");
      }
      params.check();
      if (has_latent(kind) && latent.z.size() != latent_size) {
        throw ConfigError("initial latent vector has the wrong length");
      }
    } else {
      params = KernelParams(model.family, data.p());
      for (std::size_t s = 0; s < params.selection_sets(); ++s) {
        for (std::size_t k = 0; k < data.p(); ++k) {
          if (rng.bernoulli(prior.inclusion.alpha_at(k))) {
            std::vector<double> rhos(params.terms_of_set(s).size());
            for (auto& r : rhos) r = rng.uniform();
            params.include(s, k, rhos);
          }
        }
      }
      params.set_lambda_a(prior.lambda_a.mean());
      for (std::size_t t = 0; t < params.terms(); ++t) params.set_lambda_z(t, prior.lambda_z_prior(t).mean());
      if (model.family == KernelFamily::Matern) params.set_nu(prior.nu.mean());
      h.r = prior.r.mean();
      h.tau = prior.tau.mean();
      if (has_latent(kind)) latent.z = Eigen::VectorXd::Zero(latent_size);
    }
    if (lambda_a_fixed) params.set_lambda_a(model.cox_lambda_a);
    if (kind == ModelKind::Probit && latent.aug_y.size() != n) {
      latent.aug_y = gibbs_update_probit_latents(std::get<BinaryResponse>(data.response).t, latent.z, rng);
    }
    if (kind == ModelKind::Cox) {
      const auto& ev = std::get<SurvivalResponse>(data.response).event;
      if (std::none_of(ev.begin(), ev.end(), [](int e) { return e == 1; })) {
        throw DataError(DataError::Code::BadCensoring, "cox: every observation is censored");
      }
    }
    adapters.assign(params.selection_sets(), InclusionAdapter(data.p()));
    rebuild();
  }

  void rebuild() {
    blocks.clear();
    for (const auto& c : caches) blocks.push_back(build_block(c, params));
  }

  void count(const std::string& name, bool accepted) {
    auto& a = acceptance[name];
    auto& w = window[name];
    ++a.proposed;
    ++w.proposed;
    if (accepted) {
      ++a.accepted;
      ++w.accepted;
    }
  }

  void log_move(MoveType type, std::size_t set, bool accepted, std::int64_t unit, std::int64_t unit2 = -1) {
    if (!cfg.record_moves) return;
    moves.push_back(MoveRecord{static_cast<std::uint32_t>(iter), type, static_cast<std::uint8_t>(set), accepted,
                               static_cast<std::int32_t>(unit), static_cast<std::int32_t>(unit2)});
  }

  // --- likelihood pieces -------------------------------------------------

  double data_loglik(const Eigen::VectorXd& z_full, double tau) const {
    if (cfg.disable_likelihood) return 0.0;
    switch (kind) {
      case ModelKind::Count: return loglik_negbin(std::get<CountResponse>(data.response).s, z_full, tau);
      case ModelKind::Cox: {
        const auto& s = std::get<SurvivalResponse>(data.response);
        return loglik_cox_partial(s.time, s.event, z_full);
      }
      case ModelKind::Logit: return loglik_logit(std::get<BinaryResponse>(data.response).t, z_full);
      default: return 0.0;
    }
  }

  Eigen::MatrixXd latent_prior_cov(const Eigen::MatrixXd& c) const {
    Eigen::MatrixXd s = c;
    s.diagonal().array() += model.latent_jitter;
    return s;
  }

  /// Log-likelihood terms that depend on the covariance parameters.
  double target(const std::vector<BlockState>& bs, const KernelParams& p, const NuisanceBlock& hh) const {
    if (cfg.disable_likelihood) return 0.0;
    switch (kind) {
      case ModelKind::Regression:
        if (projected) return loglik_regression_projected(y, compose(bs[0], p), compose(bs[1], p), hh.r);
        return loglik_regression_marginal(y, compose(bs[0], p), hh.r);
      case ModelKind::Probit: return loglik_regression_marginal(latent.aug_y, compose(bs[0], p), 1.0);
      default: break;
    }
    const CholeskyFactor f = factorize(latent_prior_cov(compose(bs[0], p)));
    double ll = gaussian_logdensity(latent.z, f);
    if (projected) ll += data_loglik(compose(bs[1], p).transpose() * f.solve(latent.z), hh.tau);
    return ll;
  }

  double target() const { return target(blocks, params, h); }

  /// Evaluate a proposed parameter set that differs from the current one in
  /// the listed rho entries (or anywhere, when `full` is set); commit on accept.
  bool propose(KernelParams proposed, const std::vector<RhoChange>& changes, bool full, double log_extra,
               double& ll) {
    std::vector<BlockState> nb;
    if (full) {
      for (const auto& c : caches) nb.push_back(build_block(c, proposed));
    } else {
      nb = blocks;
      for (std::size_t b = 0; b < nb.size(); ++b) {
        for (const auto& ch : changes) apply_change(nb[b], caches[b], proposed, ch);
      }
    }
    const double ll_new = target(nb, proposed, h);
    if (metropolis(ll_new - ll + log_extra, rng)) {
      params = std::move(proposed);
      blocks = std::move(nb);
      ll = ll_new;
      return true;
    }
    return false;
  }

  // --- selection moves ----------------------------------------------------

  std::vector<double> draw_rhos(std::size_t set) {
    std::vector<double> r(params.terms_of_set(set).size());
    for (auto& v : r) v = rng.uniform();
    return r;
  }

  double slab_logdensity(const KernelParams& p, std::size_t set, std::size_t k) const {
    double total = 0.0;
    for (auto t : p.terms_of_set(set)) total += logprior_rho_given_gamma(p.rho(t, k), true, prior.slab);
    return total;
  }

  std::vector<RhoChange> unit_changes(const KernelParams& from, const KernelParams& to, std::size_t set,
                                      std::size_t k) const {
    std::vector<RhoChange> out;
    for (auto t : from.terms_of_set(set)) out.push_back({t, k, from.rho(t, k), to.rho(t, k)});
    return out;
  }

  double gamma_prior_delta(const KernelParams& to, std::size_t set) const {
    return logprior_gamma_vector(to.gamma(set), prior.inclusion) -
           logprior_gamma_vector(params.gamma(set), prior.inclusion);
  }

  void within(std::size_t set, std::size_t k, MoveType type, double& ll) {
    KernelParams prop = params;
    prop.include(set, k, draw_rhos(set));
    const double log_extra = slab_logdensity(prop, set, k) - slab_logdensity(params, set, k);
    const bool ok = propose(prop, unit_changes(params, prop, set, k), false, log_extra, ll);
    count("rho", ok);
    log_move(type, set, ok, static_cast<std::int64_t>(k));
  }

  void between(std::size_t set, std::size_t k, bool adaptive, double& ll) {
    const bool on = params.included(set, k);
    double log_q = 0.0;
    if (adaptive) {
      const double a = adapters[set].alpha(k);
      if (rng.bernoulli(a) == on) {
        log_move(MoveType::Between, set, false, static_cast<std::int64_t>(k));
        return;
      }
      log_q = on ? std::log(a / (1.0 - a)) : std::log((1.0 - a) / a);
    }
    KernelParams prop = params;
    double log_slab;
    if (on) {
      prop.exclude(set, k);
      log_slab = -slab_logdensity(params, set, k);
    } else {
      prop.include(set, k, draw_rhos(set));
      log_slab = slab_logdensity(prop, set, k);
    }
    const double log_extra = log_q + log_slab + gamma_prior_delta(prop, set);
    const bool ok = propose(prop, unit_changes(params, prop, set, k), false, log_extra, ll);
    count("gamma", ok);
    log_move(MoveType::Between, set, ok, static_cast<std::int64_t>(k));
  }

  void sweep(bool adaptive) {
    double ll = target();
    for (std::size_t s = 0; s < params.selection_sets(); ++s) {
      for (std::size_t k = 0; k < params.p(); ++k) {
        if (cfg.sample_gamma) between(s, k, adaptive, ll);
        if (cfg.sample_rho && params.included(s, k)) within(s, k, MoveType::Within, ll);
      }
    }
  }

  void scheme1(std::size_t s, double& ll) {
    const std::size_t p = params.p();
    if (cfg.sample_gamma) {
      std::vector<std::size_t> in, out;
      for (std::size_t k = 0; k < p; ++k) (params.included(s, k) ? in : out).push_back(k);
      std::vector<MoveType> legal;
      if (!out.empty()) legal.push_back(MoveType::Add);
      if (!in.empty()) legal.push_back(MoveType::Delete);
      if (!in.empty() && !out.empty()) legal.push_back(MoveType::Swap);
      const MoveType type = legal[rng.index(legal.size())];
      const double k_in = static_cast<double>(in.size());
      const double pd = static_cast<double>(p);
      const double pick_before = 1.0 / static_cast<double>(legal.size());
      KernelParams prop = params;
      std::vector<RhoChange> changes;
      double log_extra = 0.0;
      std::int64_t unit = -1, unit2 = -1;
      if (type == MoveType::Add) {
        const std::size_t j = out[rng.index(out.size())];
        prop.include(s, j, draw_rhos(s));
        changes = unit_changes(params, prop, s, j);
        const double pick_after = 1.0 / static_cast<double>(legal_move_count(in.size() + 1, p));
        log_extra = std::log(pick_after / (k_in + 1.0)) - std::log(pick_before / (pd - k_in)) +
                    slab_logdensity(prop, s, j);
        unit = static_cast<std::int64_t>(j);
      } else if (type == MoveType::Delete) {
        const std::size_t j = in[rng.index(in.size())];
        prop.exclude(s, j);
        changes = unit_changes(params, prop, s, j);
        const double pick_after = 1.0 / static_cast<double>(legal_move_count(in.size() - 1, p));
        log_extra = std::log(pick_after / (pd - k_in + 1.0)) - std::log(pick_before / k_in) -
                    slab_logdensity(params, s, j);
        unit = static_cast<std::int64_t>(j);
      } else {
        const std::size_t add = out[rng.index(out.size())];
        const std::size_t del = in[rng.index(in.size())];
        prop.include(s, add, draw_rhos(s));
        prop.exclude(s, del);
        changes = unit_changes(params, prop, s, add);
        for (auto& c : unit_changes(params, prop, s, del)) changes.push_back(c);
        log_extra = slab_logdensity(prop, s, add) - slab_logdensity(params, s, del);
        unit = static_cast<std::int64_t>(add);
        unit2 = static_cast<std::int64_t>(del);
      }
      log_extra += gamma_prior_delta(prop, s);
      const bool ok = propose(prop, changes, false, log_extra, ll);
      count("gamma", ok);
      log_move(type, s, ok, unit, unit2);
    }
    if (!cfg.sample_rho) return;
    // Keep
    if (cfg.keep == KeepMode::PerCoordinate) {
      for (std::size_t k = 0; k < p; ++k) {
        if (params.included(s, k)) within(s, k, MoveType::Keep, ll);
      }
      return;
    }
    KernelParams prop = params;
    double log_extra = 0.0;
    bool any = false;
    for (std::size_t k = 0; k < p; ++k) {
      if (!params.included(s, k)) continue;
      any = true;
      prop.include(s, k, draw_rhos(s));
      log_extra += slab_logdensity(prop, s, k) - slab_logdensity(params, s, k);
    }
    if (!any) return;
    const bool ok = propose(prop, {}, true, log_extra, ll);
    count("rho", ok);
    log_move(MoveType::Keep, s, ok, -1);
  }

  void scheme1_all() {
    double ll = target();
    for (std::size_t s = 0; s < params.selection_sets(); ++s) scheme1(s, ll);
  }

  // --- precisions and nuisance --------------------------------------------

  double draw_centered_gamma(double x, double s) { return rng.gamma(s, s / x); }

  /// log q(x | x_new) - log q(x_new | x) for the centred Gamma proposal.
  static double gamma_proposal_ratio(double x, double x_new, double s) {
    return logprior_positive(x, s, s / x_new) - logprior_positive(x_new, s, s / x);
  }

  void update_precisions() {
    if (!cfg.sample_precisions) return;
    double ll = target();
    if (!lambda_a_fixed) {
      const double s = shape["lambda_a"];
      const double x = params.lambda_a();
      const double x_new = draw_centered_gamma(x, s);
      KernelParams prop = params;
      prop.set_lambda_a(x_new);
      const double ll_new = target(blocks, prop, h);
      const double log_alpha = ll_new - ll + logprior_positive(x_new, prior.lambda_a) -
                               logprior_positive(x, prior.lambda_a) + gamma_proposal_ratio(x, x_new, s);
      const bool ok = metropolis(log_alpha, rng);
      if (ok) {
        params = std::move(prop);
        ll = ll_new;
      }
      count("lambda_a", ok);
    }
    for (std::size_t t = 0; t < params.terms(); ++t) {
      const std::string name = t == 0 ? "lambda_z" : "lambda_z2";
      const double s = shape[name];
      const double x = params.lambda_z(t);
      const double x_new = draw_centered_gamma(x, s);
      KernelParams prop = params;
      prop.set_lambda_z(t, x_new);
      const double ll_new = target(blocks, prop, h);
      const auto& g = prior.lambda_z_prior(t);
      const double log_alpha = ll_new - ll + logprior_positive(x_new, g) - logprior_positive(x, g) +
                               gamma_proposal_ratio(x, x_new, s);
      const bool ok = metropolis(log_alpha, rng);
      if (ok) {
        params = std::move(prop);
        ll = ll_new;
      }
      count(name, ok);
    }
  }

  void update_nuisance() {
    if (!cfg.sample_nuisance) return;
    if (kind == ModelKind::Regression) {
      const double ll = target();
      const double s = shape["r"];
      NuisanceBlock prop = h;
      prop.r = draw_centered_gamma(h.r, s);
      const double ll_new = target(blocks, params, prop);
      const double log_alpha = ll_new - ll + logprior_positive(prop.r, prior.r) - logprior_positive(h.r, prior.r) +
                               gamma_proposal_ratio(h.r, prop.r, s);
      const bool ok = metropolis(log_alpha, rng);
      if (ok) h = prop;
      count("r", ok);
    }
    if (kind == ModelKind::Count) {
      const Eigen::VectorXd zf = latent_at_data();
      const double s = shape["tau"];
      const double tau_new = draw_centered_gamma(h.tau, s);
      const double log_alpha = data_loglik(zf, tau_new) - data_loglik(zf, h.tau) +
                               logprior_positive(tau_new, prior.tau) - logprior_positive(h.tau, prior.tau) +
                               gamma_proposal_ratio(h.tau, tau_new, s);
      const bool ok = metropolis(log_alpha, rng);
      if (ok) h.tau = tau_new;
      count("tau", ok);
    }
    if (params.family() == KernelFamily::Matern) {
      double ll = target();
      const double nu_new = params.nu() * std::exp(nu_sd * rng.normal());
      KernelParams prop = params;
      prop.set_nu(nu_new);
      // log-normal proposal: q(nu | nu') / q(nu' | nu) = nu' / nu
      const double log_extra = logprior_positive(nu_new, prior.nu) - logprior_positive(params.nu(), prior.nu) +
                               std::log(nu_new / params.nu());
      count("nu", propose(prop, {}, true, log_extra, ll));
    }
  }

  // --- latent values -------------------------------------------------------

  Eigen::VectorXd latent_at_data() const {
    if (!has_latent(kind)) return {};
    if (!projected) return latent.z;
    const CholeskyFactor f = factorize(latent_prior_cov(compose(blocks[0], params)));
    return compose(blocks[1], params).transpose() * f.solve(latent.z);
  }

  void update_latent() {
    if (!has_latent(kind)) return;
    if (kind == ModelKind::Probit) {
      const auto& t = std::get<BinaryResponse>(data.response).t;
      const Eigen::MatrixXd c = compose(blocks[0], params);
      Eigen::MatrixXd sigma = c;
      sigma.diagonal().array() += 1.0;
      const CholeskyFactor f_sigma = factorize(sigma);
      const CholeskyFactor f_c = factorize(c);
      const Eigen::Index n = c.rows();
      // z | aug_y drawn exactly: prior draw corrected towards the data.
      const Eigen::VectorXd f = f_c.lower_times(normals(n, rng));
      const Eigen::VectorXd e = normals(n, rng);
      latent.z = f + c * f_sigma.solve(Eigen::VectorXd(latent.aug_y - f - e));
      latent.aug_y = gibbs_update_probit_latents(t, latent.z, rng);
      return;
    }
    const CholeskyFactor f = factorize(latent_prior_cov(compose(blocks[0], params)));
    LatentStepStats stats;
    if (projected) {
      const Eigen::MatrixXd proj = f.solve(Eigen::MatrixXd(compose(blocks[1], params))).transpose();
      stats = update_latent_z(
          latent.z, f, eps, cfg.z_reps, [&](const Eigen::VectorXd& z) { return data_loglik(proj * z, h.tau); }, rng);
    } else {
      stats = update_latent_z(
          latent.z, f, eps, cfg.z_reps, [&](const Eigen::VectorXd& z) { return data_loglik(z, h.tau); }, rng);
    }
    auto& a = acceptance["z"];
    auto& w = window["z"];
    a.proposed += stats.proposed;
    a.accepted += stats.accepted;
    w.proposed += stats.proposed;
    w.accepted += stats.accepted;
  }

  // --- tuning and iteration ------------------------------------------------

  void autotune() {
    for (auto& [name, w] : window) {
      if (w.proposed < 20) continue;
      const double rate = w.rate();
      if (name == "z") {
        if (rate < 0.4) eps *= 0.8;
        if (rate > 0.6) eps = std::min(1.0, eps * 1.25);
      } else if (name == "nu") {
        if (rate < 0.4) nu_sd *= 0.8;
        if (rate > 0.6) nu_sd *= 1.25;
      } else if (shape.count(name)) {
        // larger shape, smaller steps
        if (rate < 0.4) shape[name] *= 1.5;
        if (rate > 0.6) shape[name] = std::max(0.5, shape[name] / 1.5);
      }
    }
    window.clear();
  }

  void iterate() {
    const bool adaptive = cfg.scheme == Scheme::TwoAdaptive && iter >= cfg.adapt_warmup;
    switch (cfg.scheme) {
      case Scheme::One: scheme1_all(); break;
      case Scheme::Two:
      case Scheme::TwoAdaptive: sweep(adaptive); break;
    }
    rebuild();
    update_precisions();
    update_nuisance();
    update_latent();
    if (cfg.scheme == Scheme::TwoAdaptive) {
      for (std::size_t s = 0; s < adapters.size(); ++s) adapters[s].observe(params.gamma(s));
    }
    ++iter;
    if (cfg.autotune && iter <= cfg.burnin && iter % 50 == 0) autotune();
  }
};

// ---------------------------------------------------------------------------
// Chain

Chain::Chain(const ModelData& data, const ModelOptions& model, const PriorConfig& prior, const SamplerConfig& config,
             const std::optional<ChainInit>& init)
    : impl_(std::make_unique<Impl>(data, model, prior, config, init)) {}
Chain::~Chain() = default;
Chain::Chain(Chain&&) noexcept = default;
Chain& Chain::operator=(Chain&&) noexcept = default;

void Chain::scheme1_step() { impl_->scheme1_all(); }
void Chain::scheme2_sweep(bool adaptive) { impl_->sweep(adaptive); }
void Chain::update_precisions() { impl_->update_precisions(); }
void Chain::update_nuisance() { impl_->update_nuisance(); }
void Chain::update_latent() { impl_->update_latent(); }
void Chain::iterate() { impl_->iterate(); }
std::size_t Chain::iteration() const { return impl_->iter; }
const KernelParams& Chain::params() const { return impl_->params; }
const NuisanceBlock& Chain::nuisance() const { return impl_->h; }
const LatentState& Chain::latent() const { return impl_->latent; }
Eigen::VectorXd Chain::latent_at_data() const { return impl_->latent_at_data(); }
ChainInit Chain::snapshot() const { return ChainInit{impl_->params, impl_->h, impl_->latent}; }
const std::vector<MoveRecord>& Chain::moves() const { return impl_->moves; }
const std::map<std::string, AcceptanceCounter>& Chain::acceptance() const { return impl_->acceptance; }
double Chain::z_step() const { return impl_->eps; }
double Chain::covariance_loglik() const { return impl_->target(); }

Eigen::MatrixXd Chain::covariance() const {
  const auto& im = *impl_;
  if (!im.projected) return compose(im.blocks[0], im.params);
  const Eigen::MatrixXd c_mm = compose(im.blocks[0], im.params);
  const Eigen::MatrixXd c_mn = compose(im.blocks[1], im.params);
  return c_mn.transpose() * factorize(c_mm).solve(c_mn);
}

PosteriorTrace Chain::run() {
  auto& im = *impl_;
  PosteriorTrace trace;
  trace.model = im.kind;
  trace.options = im.model;
  trace.p = im.data.p();
  trace.iters = im.cfg.iters;
  trace.burnin = im.cfg.burnin;
  trace.thin = im.cfg.thin;
  trace.y_mean = im.y_mean;
  trace.knots = im.knots;
  for (std::size_t s = 0; s < im.params.selection_sets(); ++s) trace.initial_gamma.push_back(im.params.gamma(s));

  const double cpu0 = cpu_now();
  const auto wall0 = std::chrono::steady_clock::now();
  const std::size_t start = im.iter;
  for (std::size_t i = 0; i < im.cfg.iters; ++i) {
    try {
      im.iterate();
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(start + i) + ": " + e.what());
    }
    if (i >= im.cfg.burnin && (i - im.cfg.burnin + 1) % im.cfg.thin == 0) {
      TraceRecord rec;
      rec.iteration = i;
      rec.params = im.params;
      rec.h = im.h;
      if (im.cfg.record_latent && has_latent(im.kind)) rec.z = im.latent_at_data();
      rec.cpu_seconds = cpu_now() - cpu0;
      trace.records.push_back(std::move(rec));
    }
  }
  trace.cpu_seconds = cpu_now() - cpu0;
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  trace.moves = im.moves;
  trace.acceptance = im.acceptance;
  for (const auto& [name, a] : im.acceptance) {
    if (name == "gamma" || name == "rho" || a.proposed == 0) continue;
    if (a.rate() < 0.40 || a.rate() > 0.60) {
      trace.warnings.push_back("acceptance rate for " + name + " is " + std::to_string(a.rate()) +
                               " (outside 0.40-0.60)");
    }
  }
  return trace;
}

PosteriorTrace run_chain(const SamplerConfig& config, const ModelData& data, const PriorConfig& prior,
                         const ModelOptions& model, const std::optional<ChainInit>& init) {
  Chain chain(data, model, prior, config, init);
  return chain.run();
}

// ---------------------------------------------------------------------------
// Diagnostics

std::vector<double> marginal_inclusion(const PosteriorTrace& trace, std::size_t set) {
  if (trace.records.empty()) throw Error("marginal_inclusion: empty trace");
  std::vector<double> out(trace.p, 0.0);
  for (const auto& r : trace.records) {
    for (std::size_t k = 0; k < trace.p; ++k) out[k] += r.params.included(set, k) ? 1.0 : 0.0;
  }
  for (auto& v : out) v /= static_cast<double>(trace.records.size());
  return out;
}

double autocorrelation_time(const std::vector<double>& samples) {
  const std::size_t n = samples.size();
  if (n < 10) throw ConfigError("autocorrelation_time needs at least 10 samples");
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = samples[i] - mean;
  double var = 0.0;
  for (double v : c) var += v * v;
  if (!(var > 0.0)) throw NumericalError("autocorrelation_time: series has zero variance");
  double tau = 1.0;
  for (std::size_t lag = 1; lag < n; ++lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) acc += c[i] * c[i + lag];
    const double rho = acc / var;
    if (rho <= 0.0) break;
    tau += 2.0 * rho;
  }
  return tau;
}

double effective_sample_size(const std::vector<double>& samples) {
  return static_cast<double>(samples.size()) / autocorrelation_time(samples);
}

std::vector<double> rho_series(const PosteriorTrace& trace, std::size_t term, std::size_t k) {
  std::vector<double> out;
  out.reserve(trace.records.size());
  for (const auto& r : trace.records) out.push_back(r.params.rho(term, k));
  return out;
}

}  // namespace gpvs

#include "gpvs/cli.hpp"

#include "gpvs/error.hpp"
#include "gpvs/predict.hpp"
#include "gpvs/random.hpp"
#include "gpvs/simgen.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <regex>
#include <sstream>
#include <thread>

namespace gpvs::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kGammaKeys = {"lambda_a", "lambda_z", "lambda_z2", "r", "tau", "nu"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("invalid number '" + v + "' for " + key);
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("invalid non-negative integer '" + v + "' for " + key);
  }
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (const std::exception&) {
    throw ConfigError("integer out of range for " + key);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean '" + v + "' for " + key);
}

bool is_latent_walk(const std::string& model) { return model == "count" || model == "cox" || model == "logit"; }

bool known_model(const std::string& m) {
  return m == "regression" || m == "logit" || m == "probit" || m == "count" || m == "cox";
}

ResponseKind parse_response_kind(const std::string& s) {
  if (s == "continuous") return ResponseKind::Continuous;
  if (s == "binary") return ResponseKind::Binary;
  if (s == "count") return ResponseKind::Count;
  if (s == "survival") return ResponseKind::Survival;
  throw ConfigError("unknown response '" + s + "' (expected continuous, binary, count or survival)");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Code::Io, "cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "model",          "kernel",          "input",       "test",         "holdout",
      "response",       "event",           "scaling",     "chains",       "scheme",
      "iters",          "burnin",          "thin",        "keep",         "adapt_warmup",
      "z_reps",         "z_step",          "lambda_shape", "nu_step",     "autotune",
      "projection_ratio", "seed",          "latent_jitter", "cox_lambda_a", "inclusion",
      "alpha",          "alphas",          "slab",        "slab_a",       "slab_b",
      "gamma_convention", "lambda_a_prior", "lambda_z_prior", "lambda_z2_prior", "r_prior",
      "tau_prior",      "nu_prior"};
  return keys;
}

RunConfig::RunConfig() = default;

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "model") {
    if (!known_model(v)) throw ConfigError("unknown model '" + v + "' (expected regression, logit, probit, count, cox)");
    model = v;
  } else if (key == "kernel") {
    kernel = parse_kernel_family(v);
  } else if (key == "input") {
    input = v;
  } else if (key == "test") {
    test = v;
  } else if (key == "holdout") {
    holdout = parse_double(key, v);
  } else if (key == "response") {
    response = v;
  } else if (key == "event") {
    event = v;
  } else if (key == "scaling") {
    if (v == "unit") scaling = Scaling::UnitCube;
    else if (v == "standardize") scaling = Scaling::Standardize;
    else throw ConfigError("unknown scaling '" + v + "' (expected unit or standardize)");
  } else if (key == "chains") {
    chains = parse_count(key, v);
  } else if (key == "scheme") {
    sampler.scheme = parse_scheme(v);
  } else if (key == "iters") {
    sampler.iters = parse_count(key, v);
  } else if (key == "burnin") {
    sampler.burnin = parse_count(key, v);
  } else if (key == "thin") {
    sampler.thin = parse_count(key, v);
  } else if (key == "keep") {
    sampler.keep = parse_keep_mode(v);
  } else if (key == "adapt_warmup") {
    sampler.adapt_warmup = parse_count(key, v);
  } else if (key == "z_reps") {
    sampler.z_reps = parse_count(key, v);
  } else if (key == "z_step") {
    sampler.z_step = parse_double(key, v);
  } else if (key == "lambda_shape") {
    sampler.lambda_proposal_shape = parse_double(key, v);
  } else if (key == "nu_step") {
    sampler.nu_proposal_sd = parse_double(key, v);
  } else if (key == "autotune") {
    sampler.autotune = parse_bool(key, v);
  } else if (key == "projection_ratio") {
    if (v.empty() || v == "none") sampler.projection.reset();
    else sampler.projection = parse_double(key, v);
  } else if (key == "seed") {
    try {
      std::size_t used = 0;
      sampler.seed = std::stoull(v, &used);
      if (used != v.size() || v.front() == '-') throw ConfigError("");
    } catch (const std::exception&) {
      throw ConfigError("invalid seed '" + v + "'");
    }
  } else if (key == "latent_jitter") {
    latent_jitter = parse_double(key, v);
  } else if (key == "cox_lambda_a") {
    cox_lambda_a = parse_double(key, v);
  } else if (key == "inclusion") {
    if (v == "fixed") inclusion.kind = InclusionPrior::Kind::FixedAlpha;
    else if (v == "beta-bernoulli") inclusion.kind = InclusionPrior::Kind::BetaBernoulli;
    else throw ConfigError("unknown inclusion prior '" + v + "' (expected fixed or beta-bernoulli)");
  } else if (key == "alpha") {
    inclusion.alpha = parse_double(key, v);
  } else if (key == "alphas") {
    inclusion.alphas.clear();
    if (!v.empty()) {
      for (const auto& part : split(v, ',')) inclusion.alphas.push_back(parse_double(key, part));
    }
  } else if (key == "slab") {
    if (v == "uniform") slab.kind = Slab::Kind::Uniform;
    else if (v == "beta") slab.kind = Slab::Kind::Beta;
    else throw ConfigError("unknown slab '" + v + "' (expected uniform or beta)");
  } else if (key == "slab_a") {
    slab.a = parse_double(key, v);
  } else if (key == "slab_b") {
    slab.b = parse_double(key, v);
  } else if (key == "gamma_convention") {
    if (v == "rate") scale_convention = false;
    else if (v == "scale") scale_convention = true;
    else throw ConfigError("unknown gamma convention '" + v + "' (expected rate or scale)");
  } else if (key.size() > 6 && key.compare(key.size() - 6, 6, "_prior") == 0 &&
             std::find(kGammaKeys.begin(), kGammaKeys.end(), key.substr(0, key.size() - 6)) != kGammaKeys.end()) {
    const auto parts = split(v, ',');
    if (parts.size() != 2) throw ConfigError(key + " expects two numbers 'a,b'");
    gamma_priors[key.substr(0, key.size() - 6)] = {parse_double(key, parts[0]), parse_double(key, parts[1])};
  } else {
    throw ConfigError("unknown option '" + key + "'");
  }
  explicit_keys.insert(key);
}

bool RunConfig::applies(const std::string& key) const {
  const bool two_terms = term_count(kernel) == 2;
  if (key == "nu_prior" || key == "nu_step") return kernel == KernelFamily::Matern;
  if (key == "lambda_z2_prior") return two_terms;
  if (key == "r_prior") return model == "regression";
  if (key == "tau_prior") return model == "count";
  if (key == "lambda_a_prior") return model != "cox";
  if (key == "cox_lambda_a" || key == "event") return model == "cox";
  if (key == "latent_jitter" || key == "z_reps" || key == "z_step") return is_latent_walk(model);
  if (key == "projection_ratio") return model != "probit";
  if (key == "keep") return sampler.scheme == Scheme::One;
  if (key == "adapt_warmup") return sampler.scheme == Scheme::TwoAdaptive;
  if (key == "slab_a" || key == "slab_b") return slab.kind == Slab::Kind::Beta;
  if (key == "alphas") return inclusion.kind == InclusionPrior::Kind::FixedAlpha;
  return std::find(config_keys().begin(), config_keys().end(), key) != config_keys().end();
}

void RunConfig::validate() const {
  for (const auto& key : explicit_keys) {
    if (applies(key)) continue;
    std::string why;
    if (key == "nu_prior" || key == "nu_step") why = "kernel=matern";
    else if (key == "lambda_z2_prior") why = "a two-term kernel (exp2-separate or exp2-joint)";
    else if (key == "r_prior") why = "model=regression";
    else if (key == "tau_prior") why = "model=count";
    else if (key == "lambda_a_prior") why = "a model other than cox (use cox_lambda_a)";
    else if (key == "cox_lambda_a" || key == "event") why = "model=cox";
    else if (key == "latent_jitter" || key == "z_reps" || key == "z_step") why = "model=count, cox or logit";
    else if (key == "projection_ratio") why = "a model other than probit";
    else if (key == "keep") why = "scheme=1";
    else if (key == "adapt_warmup") why = "scheme=2a";
    else if (key == "slab_a" || key == "slab_b") why = "slab=beta";
    else if (key == "alphas") why = "inclusion=fixed";
    throw ConfigError("option '" + key + "' only applies with " + why);
  }
  if (!(holdout >= 0.0 && holdout < 1.0)) throw ConfigError("holdout must lie in [0,1)");
  if (holdout > 0.0 && !test.empty()) throw ConfigError("holdout and test cannot be combined");
  if (chains == 0) throw ConfigError("chains must be at least 1");
  if (!(latent_jitter >= 0.0)) throw ConfigError("latent_jitter must be non-negative");
  if (!(cox_lambda_a > 0.0)) throw ConfigError("cox_lambda_a must be positive");
  for (const auto& [name, g] : gamma_priors) {
    if (!(g.a > 0.0 && g.b > 0.0)) throw ConfigError(name + "_prior parameters must be positive");
  }
  sampler.validate();
  prior_config().validate(inclusion.alphas.empty() ? 1 : inclusion.alphas.size());
}

std::string RunConfig::value_of(const std::string& key) const {
  if (key == "model") return model;
  if (key == "kernel") return to_string(kernel);
  if (key == "input") return input;
  if (key == "test") return test;
  if (key == "holdout") return format_double(holdout);
  if (key == "response") return response;
  if (key == "event") return event;
  if (key == "scaling") return scaling == Scaling::UnitCube ? "unit" : "standardize";
  if (key == "chains") return std::to_string(chains);
  if (key == "scheme") return to_string(sampler.scheme);
  if (key == "iters") return std::to_string(sampler.iters);
  if (key == "burnin") return std::to_string(sampler.burnin);
  if (key == "thin") return std::to_string(sampler.thin);
  if (key == "keep") return to_string(sampler.keep);
  if (key == "adapt_warmup") return std::to_string(sampler.adapt_warmup);
  if (key == "z_reps") return std::to_string(sampler.z_reps);
  if (key == "z_step") return format_double(sampler.z_step);
  if (key == "lambda_shape") return format_double(sampler.lambda_proposal_shape);
  if (key == "nu_step") return format_double(sampler.nu_proposal_sd);
  if (key == "autotune") return sampler.autotune ? "true" : "false";
  if (key == "projection_ratio") return sampler.projection ? format_double(*sampler.projection) : "none";
  if (key == "seed") return std::to_string(sampler.seed);
  if (key == "latent_jitter") return format_double(latent_jitter);
  if (key == "cox_lambda_a") return format_double(cox_lambda_a);
  if (key == "inclusion") return inclusion.kind == InclusionPrior::Kind::FixedAlpha ? "fixed" : "beta-bernoulli";
  if (key == "alpha") return format_double(inclusion.alpha);
  if (key == "alphas") {
    std::string out;
    for (std::size_t k = 0; k < inclusion.alphas.size(); ++k) {
      out += (k ? "," : "") + format_double(inclusion.alphas[k]);
    }
    return out;
  }
  if (key == "slab") return slab.kind == Slab::Kind::Uniform ? "uniform" : "beta";
  if (key == "slab_a") return format_double(slab.a);
  if (key == "slab_b") return format_double(slab.b);
  if (key == "gamma_convention") return scale_convention ? "scale" : "rate";
  if (key.size() > 6 && key.compare(key.size() - 6, 6, "_prior") == 0) {
    const std::string name = key.substr(0, key.size() - 6);
    if (auto it = gamma_priors.find(name); it != gamma_priors.end()) {
      return format_double(it->second.a) + "," + format_double(it->second.b);
    }
    const PriorConfig defaults;
    const std::map<std::string, GammaPrior> table = {{"lambda_a", defaults.lambda_a}, {"lambda_z", defaults.lambda_z},
                                                     {"lambda_z2", defaults.lambda_z2}, {"r", defaults.r},
                                                     {"tau", defaults.tau}, {"nu", defaults.nu}};
    const GammaPrior& g = table.at(name);
    return format_double(g.shape) + "," + format_double(scale_convention ? 1.0 / g.rate : g.rate);
  }
  throw ConfigError("unknown option '" + key + "'");
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& key : config_keys()) {
    if (!applies(key)) continue;
    if (key == "alphas" && inclusion.alphas.empty()) continue;
    out << key << '=' << value_of(key) << '\n';
  }
  return out.str();
}

ResponseKind RunConfig::response_kind() const {
  if (model == "regression") return ResponseKind::Continuous;
  if (model == "count") return ResponseKind::Count;
  if (model == "cox") return ResponseKind::Survival;
  return ResponseKind::Binary;
}

ResponseSpec RunConfig::response_spec() const {
  ResponseSpec spec;
  spec.kind = response_kind();
  spec.column = response.empty() ? (spec.kind == ResponseKind::Survival ? "time" : "y") : response;
  if (spec.kind == ResponseKind::Survival) spec.event_column = event;
  return spec;
}

PriorConfig RunConfig::prior_config() const {
  PriorConfig prior;
  prior.slab = slab;
  prior.inclusion = inclusion;
  const std::map<std::string, GammaPrior*> slots = {{"lambda_a", &prior.lambda_a}, {"lambda_z", &prior.lambda_z},
                                                    {"lambda_z2", &prior.lambda_z2}, {"r", &prior.r},
                                                    {"tau", &prior.tau}, {"nu", &prior.nu}};
  for (const auto& [name, g] : gamma_priors) {
    *slots.at(name) = GammaPrior{g.a, scale_convention ? 1.0 / g.b : g.b};
  }
  return prior;
}

ModelOptions RunConfig::model_options() const {
  ModelOptions opt;
  opt.family = kernel;
  opt.link = model == "probit" ? BinaryLink::Probit : BinaryLink::Logit;
  opt.latent_jitter = model == "probit" ? 0.0 : latent_jitter;
  opt.cox_lambda_a = cox_lambda_a;
  return opt;
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str());
  return cfg;
}

// ---------------------------------------------------------------------------
// Data and fitting

PreparedData prepare_data(const RunConfig& cfg, const std::string& test_override) {
  if (cfg.input.empty()) throw ConfigError("no input file given");
  const ResponseSpec spec = cfg.response_spec();
  RawData raw = split_table(read_csv_table(cfg.input), spec);

  ModelData all;
  all.x = std::move(raw.x);
  all.response = std::move(raw.response);
  all.column_names = std::move(raw.column_names);
  all.column_mins = Eigen::VectorXd::Zero(all.x.cols());
  all.column_ranges = Eigen::VectorXd::Ones(all.x.cols());
  all.scaling = cfg.scaling;

  std::optional<ModelData> test_raw;
  const std::string test_path = test_override.empty() ? cfg.test : test_override;
  ModelData train_raw;
  if (!test_path.empty()) {
    RawData t = split_table(read_csv_table(test_path), spec);
    if (t.column_names != all.column_names) {
      throw DataError(DataError::Code::Shape, "test file columns differ from the training file");
    }
    ModelData td;
    td.x = std::move(t.x);
    td.response = std::move(t.response);
    td.column_names = std::move(t.column_names);
    test_raw = std::move(td);
    train_raw = std::move(all);
  } else if (cfg.holdout > 0.0) {
    const std::size_t n = all.n();
    const auto n_test = static_cast<std::size_t>(std::llround(cfg.holdout * static_cast<double>(n)));
    if (n_test == 0 || n_test + 2 > n) throw ConfigError("holdout leaves too few training or test rows");
    std::vector<std::size_t> a(n - n_test), b(n_test);
    std::iota(a.begin(), a.end(), std::size_t{0});
    std::iota(b.begin(), b.end(), n - n_test);
    test_raw = subset_rows(all, b);
    train_raw = subset_rows(all, a);
  } else {
    train_raw = std::move(all);
  }

  PreparedData out;
  const Normalized norm = normalize(train_raw.x, cfg.scaling);
  out.train = std::move(train_raw);
  out.train.x = norm.x;
  out.train.column_mins = norm.mins;
  out.train.column_ranges = norm.ranges;
  out.train.scaling = cfg.scaling;
  out.train.validate();
  if (test_raw) {
    ModelData t = std::move(*test_raw);
    t.x = apply_normalization(t.x, norm.mins, norm.ranges, cfg.scaling);
    t.column_mins = norm.mins;
    t.column_ranges = norm.ranges;
    t.column_names = out.train.column_names;
    t.scaling = cfg.scaling;
    out.test = std::move(t);
  }
  return out;
}

std::vector<PosteriorTrace> fit_chains(const RunConfig& cfg, const ModelData& train) {
  cfg.validate();
  if (train.kind() != cfg.response_kind()) throw ConfigError("response type does not match model=" + cfg.model);
  const PriorConfig prior = cfg.prior_config();
  prior.validate(train.p());
  const ModelOptions options = cfg.model_options();

  std::vector<PosteriorTrace> traces(cfg.chains);
  std::vector<std::exception_ptr> errors(cfg.chains);
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < cfg.chains; ++i) {
    workers.emplace_back([&, i] {
      try {
        SamplerConfig sc = cfg.sampler;
        sc.seed = chain_seed(cfg.sampler.seed, i);
        traces[i] = run_chain(sc, train, prior, options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return traces;
}

// ---------------------------------------------------------------------------
// Trace files

namespace {

std::vector<std::string> trace_header(const PosteriorTrace& trace, KernelFamily family, std::size_t p,
                                      std::size_t z_len) {
  std::vector<std::string> h = {"iteration"};
  auto add_block = [&](const std::string& prefix) {
    for (std::size_t k = 0; k < p; ++k) h.push_back(prefix + std::to_string(k + 1));
  };
  add_block("gamma_");
  if (selection_set_count(family) == 2) add_block("gamma2_");
  add_block("rho_");
  if (term_count(family) == 2) add_block("rho2_");
  h.push_back("lambda_a");
  h.push_back("lambda_z");
  if (term_count(family) == 2) h.push_back("lambda_z2");
  if (trace.model == ModelKind::Regression) h.push_back("r");
  if (trace.model == ModelKind::Count) h.push_back("tau");
  if (family == KernelFamily::Matern) h.push_back("nu");
  for (std::size_t i = 0; i < z_len; ++i) h.push_back("z_" + std::to_string(i + 1));
  return h;
}

}  // namespace

void write_trace_csv(const std::string& path, const PosteriorTrace& trace) {
  auto out = open_out(path);
  const KernelFamily family = trace.options.family;
  const std::size_t p = trace.p;
  std::size_t z_len = 0;
  if (!trace.records.empty()) z_len = static_cast<std::size_t>(trace.records.front().z.size());
  const auto header = trace_header(trace, family, p, z_len);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (const auto& rec : trace.records) {
    const KernelParams& q = rec.params;
    out << rec.iteration;
    for (std::size_t s = 0; s < q.selection_sets(); ++s) {
      for (std::size_t k = 0; k < p; ++k) out << ',' << (q.included(s, k) ? 1 : 0);
    }
    for (std::size_t t = 0; t < q.terms(); ++t) {
      for (std::size_t k = 0; k < p; ++k) out << ',' << format_double(q.rho(t, k));
    }
    out << ',' << format_double(q.lambda_a());
    for (std::size_t t = 0; t < q.terms(); ++t) out << ',' << format_double(q.lambda_z(t));
    if (trace.model == ModelKind::Regression) out << ',' << format_double(rec.h.r);
    if (trace.model == ModelKind::Count) out << ',' << format_double(rec.h.tau);
    if (family == KernelFamily::Matern) out << ',' << format_double(q.nu());
    for (Eigen::Index i = 0; i < rec.z.size(); ++i) out << ',' << format_double(rec.z[i]);
    out << '\n';
  }
}

PosteriorTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Code::Io, "cannot read trace '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(DataError::Code::Parse, "empty trace '" + path + "'");
  const auto header = split(line, ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < header.size(); ++c) col[header[c]] = c;
  auto has = [&](const std::string& name) { return col.count(name) > 0; };
  if (!has("iteration") || !has("lambda_a")) {
    throw DataError(DataError::Code::MissingColumn, "'" + path + "' is not a trace file");
  }

  std::size_t p = 0;
  while (has("gamma_" + std::to_string(p + 1))) ++p;
  std::size_t z_len = 0;
  while (has("z_" + std::to_string(z_len + 1))) ++z_len;
  KernelFamily family = KernelFamily::Exp1;
  if (has("gamma2_1")) family = KernelFamily::Exp2Separate;
  else if (has("rho2_1") || (p == 0 && has("lambda_z2"))) family = KernelFamily::Exp2Joint;
  else if (has("nu")) family = KernelFamily::Matern;
  // p == 0 with two terms cannot tell the two selection layouts apart; the
  // joint layout is then equivalent.

  PosteriorTrace trace;
  trace.options.family = family;
  trace.p = p;
  if (has("r")) trace.model = ModelKind::Regression;
  else if (has("tau")) trace.model = ModelKind::Count;
  else if (z_len > 0) trace.model = ModelKind::Logit;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw DataError(DataError::Code::Shape, path + ":" + std::to_string(lineno) + ": wrong number of fields");
    }
    auto num = [&](const std::string& name) {
      const std::string& s = cells[col.at(name)];
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != s.size()) {
        throw DataError(DataError::Code::Parse, path + ":" + std::to_string(lineno) + ": bad value '" + s + "'");
      }
      return v;
    };
    TraceRecord rec;
    rec.iteration = static_cast<std::size_t>(num("iteration"));
    KernelParams q(family, p);
    const std::size_t sets = selection_set_count(family);
    for (std::size_t s = 0; s < sets; ++s) {
      const std::string gp = s == 0 ? "gamma_" : "gamma2_";
      for (std::size_t k = 0; k < p; ++k) {
        if (num(gp + std::to_string(k + 1)) == 0.0) continue;
        std::vector<double> rhos;
        for (auto t : q.terms_of_set(s)) rhos.push_back(num((t == 0 ? "rho_" : "rho2_") + std::to_string(k + 1)));
        q.include(s, k, rhos);
      }
    }
    q.set_lambda_a(num("lambda_a"));
    q.set_lambda_z(0, num("lambda_z"));
    if (term_count(family) == 2) q.set_lambda_z(1, num("lambda_z2"));
    if (family == KernelFamily::Matern) q.set_nu(num("nu"));
    rec.params = std::move(q);
    if (has("r")) rec.h.r = num("r");
    if (has("tau")) rec.h.tau = num("tau");
    rec.z.resize(static_cast<Eigen::Index>(z_len));
    for (std::size_t i = 0; i < z_len; ++i) rec.z[static_cast<Eigen::Index>(i)] = num("z_" + std::to_string(i + 1));
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

void write_moves_csv(const std::string& path, const PosteriorTrace& trace) {
  auto out = open_out(path);
  out << "iteration,type,set,accepted,unit,unit2\n";
  for (const auto& m : trace.moves) {
    out << m.iteration << ',' << to_string(m.type) << ',' << int(m.set) << ',' << (m.accepted ? 1 : 0) << ','
        << (m.unit >= 0 ? m.unit + 1 : 0) << ',' << (m.unit2 >= 0 ? m.unit2 + 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Subcommands

namespace {

struct UsageError : ConfigError {
  using ConfigError::ConfigError;
};

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "gpvs_out";
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string format_fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

/// Trace files of a fit directory ordered by chain index.
std::vector<fs::path> chain_traces(const fs::path& dir) {
  std::vector<std::pair<std::size_t, fs::path>> found;
  static const std::regex pattern(R"(trace_(\d+)\.csv)");
  if (!fs::is_directory(dir)) throw DataError(DataError::Code::Io, "run directory '" + dir.string() + "' not found");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoul(m[1]), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(f.second);
  if (out.empty()) throw DataError(DataError::Code::Io, "no trace files in '" + dir.string() + "'");
  return out;
}

/// CPU seconds recorded for a trace in the manifest next to it, if any.
std::optional<double> manifest_cpu_seconds(const fs::path& trace_path) {
  static const std::regex name_pattern(R"(trace_(\d+)\.csv)");
  std::smatch m;
  const std::string name = trace_path.filename().string();
  if (!std::regex_match(name, m, name_pattern)) return std::nullopt;
  const fs::path manifest = trace_path.parent_path() / "manifest.txt";
  std::ifstream in(manifest);
  if (!in) return std::nullopt;
  const std::regex line_pattern("# chain " + m[1].str() + R"(: .*cpu_seconds=([^ ]+).*)");
  std::string line;
  while (std::getline(in, line)) {
    std::smatch lm;
    if (std::regex_match(line, lm, line_pattern)) {
      try {
        return std::stod(lm[1]);
      } catch (const std::exception&) {
        return std::nullopt;
      }
    }
  }
  return std::nullopt;
}

std::string selected_names(const std::vector<std::uint8_t>& selected, const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t k = 0; k < selected.size(); ++k) {
    if (!selected[k]) continue;
    if (!out.empty()) out += ' ';
    out += k < names.size() ? names[k] : "x" + std::to_string(k + 1);
  }
  return out.empty() ? "(none)" : out;
}

int cmd_simulate(const SimSpec& spec, const std::string& out_path, std::ostream& out) {
  const SimResult sim = generate(spec);
  const fs::path path = out_path.empty() ? fs::path("sim.csv") : fs::path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  ResponseSpec rs;
  rs.kind = spec.response;
  write_csv(path.string(), sim.data, rs);

  const fs::path truth_path = path.parent_path() / (path.stem().string() + "_truth.txt");
  auto truth = open_out(truth_path);
  truth << "kernel=" << to_string(spec.kernel) << '\n'
        << "n=" << spec.n << '\n'
        << "p=" << spec.p << '\n'
        << "seed=" << spec.seed << '\n'
        << "sigma=" << format_double(spec.noise_sd()) << '\n';
  std::string active;
  for (auto k : sim.truth) active += (active.empty() ? "" : ",") + sim.data.column_names[k];
  truth << "active=" << active << '\n';
  std::string corr;
  for (auto k : sim.correlated) corr += (corr.empty() ? "" : ",") + sim.data.column_names[k];
  if (!corr.empty()) truth << "correlated=" << corr << '\n';
  out << "wrote " << path.string() << " (" << spec.n << " rows, " << spec.p << " predictors); active: " << active
      << '\n';
  return kOk;
}

int cmd_fit(RunConfig cfg, const std::string& out_flag, std::ostream& out) {
  cfg.validate();
  PreparedData data = prepare_data(cfg);
  if (!cfg.input.empty()) cfg.input = fs::absolute(cfg.input).string();
  if (!cfg.test.empty()) cfg.test = fs::absolute(cfg.test).string();

  const fs::path dir = output_dir(out_flag);
  fs::create_directories(dir);
  const auto traces = fit_chains(cfg, data.train);

  auto manifest = open_out(dir / "manifest.txt");
  manifest << "# gpvs fit\n" << cfg.to_text();
  PosteriorTrace pooled = traces.front();
  pooled.records.clear();
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    write_trace_csv((dir / ("trace_" + std::to_string(i) + ".csv")).string(), t);
    write_moves_csv((dir / ("moves_" + std::to_string(i) + ".csv")).string(), t);
    manifest << "# chain " << i << ": seed=" << chain_seed(cfg.sampler.seed, i)
             << " cpu_seconds=" << format_double(t.cpu_seconds) << " wall_seconds=" << format_double(t.wall_seconds)
             << " records=" << t.records.size() << '\n';
    manifest << "# chain " << i << " acceptance:";
    for (const auto& [name, c] : t.acceptance) manifest << ' ' << name << '=' << format_fixed(c.rate(), 3);
    manifest << '\n';
    if (!t.knots.empty()) {
      manifest << "# chain " << i << " knots:";
      for (auto k : t.knots) manifest << ' ' << k + 1;
      manifest << '\n';
    }
    for (const auto& w : t.warnings) manifest << "# chain " << i << " warning: " << w << '\n';
    pooled.records.insert(pooled.records.end(), t.records.begin(), t.records.end());

    out << "chain " << i << ": " << t.records.size() << " draws, cpu " << format_fixed(t.cpu_seconds, 2) << " s";
    for (const auto& [name, c] : t.acceptance) out << ", " << name << ' ' << format_fixed(c.rate(), 2);
    out << '\n';
    for (const auto& w : t.warnings) out << "  warning: " << w << '\n';
  }

  const auto& names = data.train.column_names;
  for (std::size_t s = 0; s < selection_set_count(cfg.kernel); ++s) {
    const auto incl = marginal_inclusion(pooled, s);
    out << "marginal inclusion" << (selection_set_count(cfg.kernel) == 2 ? " (set " + std::to_string(s + 1) + ")" : "")
        << ":";
    for (std::size_t k = 0; k < incl.size(); ++k) {
      if (incl[k] >= 0.05) out << ' ' << names[k] << '=' << format_fixed(incl[k], 2);
    }
    out << '\n';
  }
  out << "output: " << dir.string() << '\n';
  return kOk;
}

PosteriorTrace load_run(const fs::path& dir, const RunConfig& cfg, const ModelData& train) {
  PosteriorTrace pooled;
  for (const auto& path : chain_traces(dir)) {
    PosteriorTrace t = read_trace_csv(path.string());
    if (t.p != train.p()) throw DataError(DataError::Code::Shape, "trace and training data disagree on p");
    pooled.records.insert(pooled.records.end(), std::make_move_iterator(t.records.begin()),
                          std::make_move_iterator(t.records.end()));
  }
  pooled.options = cfg.model_options();
  pooled.model = model_kind(cfg.response_kind(), pooled.options.link);
  pooled.p = train.p();
  pooled.iters = cfg.sampler.iters;
  pooled.burnin = cfg.sampler.burnin;
  pooled.thin = cfg.sampler.thin;
  if (const auto* y = std::get_if<ContinuousResponse>(&train.response)) pooled.y_mean = y->y.mean();
  return pooled;
}

struct PredictArgs {
  std::string run_dir;
  std::string test;
  std::string output;
  double threshold = 0.5;
  std::size_t subsample = 10;
  std::size_t grid_points = 100;
};

int cmd_predict(const PredictArgs& args, std::ostream& out) {
  const fs::path run_dir = args.run_dir;
  const RunConfig cfg = load_config((run_dir / "manifest.txt").string());
  cfg.validate();
  const PreparedData data = prepare_data(cfg, args.test);
  if (!data.test) throw UsageError("no test data: pass --test or fit with test= or holdout=");
  const ModelData& train = data.train;
  const ModelData& test = *data.test;
  const PosteriorTrace trace = load_run(run_dir, cfg, train);

  PredictOptions opt;
  opt.threshold = args.threshold;
  opt.subsample = args.subsample;
  if (opt.subsample == 0) throw UsageError("--subsample must be at least 1");

  const fs::path dir = args.output.empty() ? run_dir : fs::path(args.output);
  fs::create_directories(dir);
  auto pred = open_out(dir / "predictions.csv");
  auto met = open_out(dir / "metrics.txt");

  const PredictionResult res = predictive_mean(trace, train, test.x, opt);
  for (std::size_t s = 0; s < res.selected.size(); ++s) {
    const std::string names = selected_names(res.selected[s], train.column_names);
    out << "selected" << (res.selected.size() == 2 ? " (set " + std::to_string(s + 1) + ")" : "") << ": " << names
        << '\n';
    met << "selected" << (s ? std::to_string(s + 1) : "") << '=' << names << '\n';
  }
  for (const auto& w : res.warnings) out << "warning: " << w << '\n';
  met << "draws_used=" << res.draws_used << '\n';

  switch (trace.model) {
    case ModelKind::Regression:
    case ModelKind::Count: {
      Eigen::VectorXd truth(test.x.rows());
      if (const auto* y = std::get_if<ContinuousResponse>(&test.response)) truth = y->y;
      if (const auto* c = std::get_if<CountResponse>(&test.response)) {
        for (Eigen::Index i = 0; i < truth.size(); ++i) truth[i] = static_cast<double>(c->s[static_cast<std::size_t>(i)]);
      }
      pred << "row,y_hat,latent,y\n";
      for (Eigen::Index i = 0; i < truth.size(); ++i) {
        pred << i + 1 << ',' << format_double(res.y_hat[i]) << ',' << format_double(res.latent[i]) << ','
             << format_double(truth[i]) << '\n';
      }
      const Metrics m = metrics(truth, res.y_hat);
      met << "normalized_mspe=" << format_double(m.normalized_mspe) << '\n'
          << "rmspe=" << format_double(m.rmspe) << '\n'
          << "r2=" << format_double(m.r2) << '\n';
      out << "normalized MSPE " << format_fixed(m.normalized_mspe, 4) << ", RMSPE " << format_fixed(m.rmspe, 4)
          << ", R^2 " << format_fixed(m.r2, 4) << '\n';
      break;
    }
    case ModelKind::Logit:
    case ModelKind::Probit: {
      const auto labels = classify(trace, train, test.x, opt);
      const auto& truth = std::get<BinaryResponse>(test.response).t;
      pred << "row,latent,label,y\n";
      for (std::size_t i = 0; i < labels.size(); ++i) {
        pred << i + 1 << ',' << format_double(res.latent[static_cast<Eigen::Index>(i)]) << ',' << labels[i] << ','
             << truth[i] << '\n';
      }
      const double acc = accuracy(truth, labels);
      met << "accuracy=" << format_double(acc) << '\n';
      out << "accuracy " << format_fixed(acc, 4) << '\n';
      break;
    }
    case ModelKind::Cox: {
      const auto& surv_train = std::get<SurvivalResponse>(train.response);
      const auto& surv_test = std::get<SurvivalResponse>(test.response);
      const double t_max = std::max(surv_train.time.maxCoeff(), surv_test.time.maxCoeff());
      const Eigen::VectorXd grid =
          Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(std::max<std::size_t>(args.grid_points, 2)), 0.0, t_max);
      const SurvivorCurves sc = survivor_curve(trace, train, test.x, grid, opt);
      const Eigen::VectorXd km = kaplan_meier(surv_test.time, surv_test.event, grid);
      const Eigen::VectorXd avg = sc.average();
      pred << "row,latent,relative_risk,time,event\n";
      for (Eigen::Index i = 0; i < res.latent.size(); ++i) {
        pred << i + 1 << ',' << format_double(res.latent[i]) << ',' << format_double(std::exp(res.latent[i])) << ','
             << format_double(surv_test.time[i]) << ',' << surv_test.event[static_cast<std::size_t>(i)] << '\n';
      }
      auto curves = open_out(dir / "curves.csv");
      curves << "time,baseline,average,kaplan_meier\n";
      for (Eigen::Index g = 0; g < grid.size(); ++g) {
        curves << format_double(grid[g]) << ',' << format_double(sc.baseline[g]) << ',' << format_double(avg[g]) << ','
               << format_double(km[g]) << '\n';
      }
      const double sup = (avg - km).cwiseAbs().maxCoeff();
      met << "sup_distance_km=" << format_double(sup) << '\n';
      out << "sup distance between averaged survivor curve and Kaplan-Meier: " << format_fixed(sup, 4) << '\n';
      for (const auto& w : sc.warnings) out << "warning: " << w << '\n';
      break;
    }
  }
  out << "predictions: " << (dir / "predictions.csv").string() << '\n';
  return kOk;
}

struct ParamStats {
  std::string name;
  std::optional<double> inclusion;
  std::optional<double> tau;
  std::optional<double> ess;
  std::optional<double> ess_per_second;
  std::string note;
};

std::vector<ParamStats> trace_stats(const PosteriorTrace& trace, std::optional<double> cpu, double threshold) {
  std::vector<ParamStats> out;
  auto summarize = [&](const std::string& name, const std::vector<double>& series, std::optional<double> incl) {
    ParamStats s;
    s.name = name;
    s.inclusion = incl;
    const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
    if (series.empty() || *lo == *hi) {
      s.note = "degenerate";
    } else {
      try {
        s.tau = autocorrelation_time(series);
        s.ess = static_cast<double>(series.size()) / *s.tau;
        if (cpu && *cpu > 0.0) s.ess_per_second = *s.ess / *cpu;
      } catch (const ConfigError&) {
        s.note = "too short";
      } catch (const NumericalError&) {
        s.note = "degenerate";
      }
    }
    out.push_back(std::move(s));
  };
  const KernelFamily family = trace.options.family;
  for (std::size_t t = 0; t < term_count(family); ++t) {
    const std::size_t set = selection_set_of_term(family, t);
    const auto incl = marginal_inclusion(trace, set);
    for (std::size_t k = 0; k < trace.p; ++k) {
      if (incl[k] < threshold) continue;
      summarize((t == 0 ? "rho_" : "rho2_") + std::to_string(k + 1), rho_series(trace, t, k), incl[k]);
    }
  }
  std::vector<double> la, lz, lz2, r, tau, nu;
  for (const auto& rec : trace.records) {
    la.push_back(rec.params.lambda_a());
    lz.push_back(rec.params.lambda_z(0));
    if (rec.params.terms() == 2) lz2.push_back(rec.params.lambda_z(1));
    r.push_back(rec.h.r);
    tau.push_back(rec.h.tau);
    nu.push_back(rec.params.nu());
  }
  summarize("lambda_a", la, std::nullopt);
  summarize("lambda_z", lz, std::nullopt);
  if (term_count(family) == 2) summarize("lambda_z2", lz2, std::nullopt);
  if (trace.model == ModelKind::Regression) summarize("r", r, std::nullopt);
  if (trace.model == ModelKind::Count) summarize("tau", tau, std::nullopt);
  if (family == KernelFamily::Matern) summarize("nu", nu, std::nullopt);
  return out;
}

std::string cell(const std::optional<double>& v, int digits) { return v ? format_fixed(*v, digits) : "-"; }

int cmd_diagnose(const std::vector<std::string>& paths, double threshold, std::ostream& out) {
  std::vector<std::vector<ParamStats>> all;
  for (const auto& path : paths) {
    const PosteriorTrace trace = read_trace_csv(path);
    const auto cpu = manifest_cpu_seconds(path);
    auto stats = trace_stats(trace, cpu, threshold);
    out << "trace " << path << ": " << trace.records.size() << " draws, cpu seconds "
        << (cpu ? format_fixed(*cpu, 3) : std::string("unknown")) << '\n';
    out << std::left << std::setw(12) << "parameter" << std::right << std::setw(10) << "inclusion" << std::setw(12)
        << "tau" << std::setw(12) << "ess" << std::setw(12) << "ess/s" << "  note\n";
    for (const auto& s : stats) {
      out << std::left << std::setw(12) << s.name << std::right << std::setw(10) << cell(s.inclusion, 3)
          << std::setw(12) << cell(s.tau, 2) << std::setw(12) << cell(s.ess, 1) << std::setw(12)
          << cell(s.ess_per_second, 2) << "  " << s.note << '\n';
    }
    all.push_back(std::move(stats));
  }
  if (all.size() == 2) {
    out << "comparison (second / first):\n";
    out << std::left << std::setw(12) << "parameter" << std::right << std::setw(12) << "ess/s A" << std::setw(12)
        << "ess/s B" << std::setw(10) << "ratio\n";
    for (const auto& a : all[0]) {
      const auto it = std::find_if(all[1].begin(), all[1].end(), [&](const ParamStats& b) { return b.name == a.name; });
      if (it == all[1].end()) continue;
      std::optional<double> ratio;
      if (a.ess_per_second && it->ess_per_second && *a.ess_per_second > 0.0) {
        ratio = *it->ess_per_second / *a.ess_per_second;
      }
      out << std::left << std::setw(12) << a.name << std::right << std::setw(12) << cell(a.ess_per_second, 2)
          << std::setw(12) << cell(it->ess_per_second, 2) << std::setw(10) << cell(ratio, 2) << '\n';
    }
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian variable selection for Gaussian process models"};
  app.name("gpvs");
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic data set");
  std::string sim_kernel, sim_response = "continuous", sim_out;
  std::size_t sim_n = 0, sim_p = 0, sim_corr_count = SimSpec{}.correlated_count;
  std::uint64_t sim_seed = 1;
  double sim_sigma = 0.0, sim_censor = SimSpec{}.censor_rate, sim_baseline = SimSpec{}.baseline_rate, sim_corr = 0.0;
  sim->add_option("--kernel", sim_kernel, "small4, largep, mixed or sensitivity")->required();
  sim->add_option("--n", sim_n, "Number of rows")->required();
  sim->add_option("--p", sim_p, "Number of predictors")->required();
  sim->add_option("--seed", sim_seed, "Random seed");
  auto* sigma_opt = sim->add_option("--sigma", sim_sigma, "Noise sd (default per kernel)");
  sim->add_option("--response", sim_response, "continuous, binary, count or survival");
  sim->add_option("--censor-rate", sim_censor, "Censoring probability (survival)");
  sim->add_option("--baseline-rate", sim_baseline, "Baseline hazard (survival)");
  auto* corr_opt = sim->add_option("--correlation", sim_corr, "Correlation between x6 and nuisance columns");
  sim->add_option("--correlated-count", sim_corr_count, "Number of nuisance columns correlated with x6");
  sim->add_option("--out", sim_out, "Output CSV path");

  // fit
  auto* fit = app.add_subcommand("fit", "Run the sampler");
  std::string fit_config, fit_output;
  std::map<std::string, std::string> fit_values;
  fit->add_option("--config", fit_config, "key=value configuration file");
  fit->add_option("--output", fit_output, std::string("Output directory (default $") + kOutputDirEnv + " or gpvs_out)");
  std::vector<std::pair<std::string, CLI::Option*>> fit_opts;
  for (const auto& key : config_keys()) {
    fit_opts.emplace_back(key, fit->add_option("--" + dashed(key), fit_values[key], key));
  }

  // predict
  auto* pr = app.add_subcommand("predict", "Predict from a fitted run");
  PredictArgs pargs;
  pr->add_option("--run", pargs.run_dir, "Directory written by fit")->required();
  pr->add_option("--test", pargs.test, "Test CSV (default: the fit's test or holdout rows)");
  pr->add_option("--threshold", pargs.threshold, "Marginal inclusion needed to keep a predictor");
  pr->add_option("--subsample", pargs.subsample, "Use every k-th retained draw");
  pr->add_option("--grid-points", pargs.grid_points, "Time grid size for survivor curves");
  pr->add_option("--output", pargs.output, "Output directory (default: the run directory)");

  // diagnose
  auto* dg = app.add_subcommand("diagnose", "Autocorrelation and effective sample size of a trace");
  std::vector<std::string> dg_traces;
  double dg_threshold = 0.5;
  dg->add_option("--trace", dg_traces, "One trace, or two to compare")->required()->expected(1, 2);
  dg->add_option("--threshold", dg_threshold, "Report rho_k for coordinates included at least this often");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (sim->parsed()) {
      SimSpec spec;
      spec.kernel = parse_sim_kernel(sim_kernel);
      spec.n = sim_n;
      spec.p = sim_p;
      spec.seed = sim_seed;
      if (sigma_opt->count() > 0) spec.sigma = sim_sigma;
      spec.response = parse_response_kind(sim_response);
      spec.censor_rate = sim_censor;
      spec.baseline_rate = sim_baseline;
      if (corr_opt->count() > 0) spec.correlation = sim_corr;
      spec.correlated_count = sim_corr_count;
      spec.validate();
      return cmd_simulate(spec, sim_out, out);
    }
    if (fit->parsed()) {
      RunConfig cfg;
      if (!fit_config.empty()) cfg = load_config(fit_config);
      for (const auto& [key, opt] : fit_opts) {
        if (opt->count() > 0) cfg.set(key, fit_values[key]);
      }
      cfg.validate();
      return cmd_fit(std::move(cfg), fit_output, out);
    }
    if (pr->parsed()) return cmd_predict(pargs, out);
    if (dg->parsed()) return cmd_diagnose(dg_traces, dg_threshold, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}

}  // namespace gpvs::cli

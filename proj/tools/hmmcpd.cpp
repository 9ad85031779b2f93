// hmmcpd: experiment driver.
//
// Every command writes CSV to stdout (or --out) with '#' header comments that
// carry the config hash and seed. Exit codes: 0 ok, 2 bad input, 3 numerical
// failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "hmmcpd/hmmcpd.hpp"

namespace {

using namespace hmmcpd;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

/// Ordered key/value record of everything that determines a command's output.
class Config {
 public:
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void set(const std::string& key, double value) { kv_[key] = fmt(value, 17); }
  template <class T>
  void set_list(const std::string& key, const std::vector<T>& v) {
    std::ostringstream ss;
    for (std::size_t k = 0; k < v.size(); ++k) ss << (k ? ";" : "") << fmt(static_cast<double>(v[k]), 17);
    kv_[key] = ss.str();
  }

  std::string hash() const {
    std::string s;
    for (const auto& [k, v] : kv_) s += k + "=" + v + "\n";
    return hex64(fnv1a(s));
  }

  void write_header(CsvWriter& csv) const {
    csv.comment("config_hash", hash());
    for (const auto& [k, v] : kv_) csv.comment(k, v);
  }

 private:
  std::map<std::string, std::string> kv_;
};

struct Output {
  std::ofstream file;
  std::ostream* os = &std::cout;

  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file.open(path);
    if (!file) throw Error(ErrorCode::FormatError, "cannot write '" + path + "'");
    os = &file;
  }
};

struct CommonFlags {
  std::string model;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

struct CostFlags {
  std::string file;
  double cbar = std::nan("");
  int m = 1;
};

struct StrategyFlags {
  std::string kind = "pi";
  std::vector<double> A;
  std::vector<double> B;
  bool from_costs = false;
  std::string sigma = "default";
  std::string sigma_method = "overshoot";
  std::size_t sigma_samples = 10'000;
  double A_small = 1e-6;
  std::size_t max_horizon = kDefaultMaxHorizon;
};

void add_model(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("model", f.model, "Model JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out,-o", f.out, "Output file (default stdout)");
}

void add_seed(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seed", f.seed, "Master seed")->required();
  cmd->add_option("--threads", f.threads, "Worker threads (0 = all cores); results do not depend on it");
}

void add_costs(CLI::App* cmd, CostFlags& f) {
  cmd->add_option("--costs", f.file, "Cost JSON file")->check(CLI::ExistingFile);
  cmd->add_option("--cbar", f.cbar, "Uniform delay cost on closed-class states, a = 1");
  cmd->add_option("--m", f.m, "Moment order for --cbar")->check(CLI::PositiveNumber);
}

void add_strategy(CLI::App* cmd, StrategyFlags& f) {
  cmd->add_option("--strategy", f.kind, "pi (tau_A) or llr (upsilon_B)")->check(CLI::IsMember({"pi", "llr"}));
  cmd->add_option("--A", f.A, "Thresholds A_i: one value or M values")->delimiter(',');
  cmd->add_option("--B", f.B, "Thresholds B_ij: one value or M*M values, row i = 1..M over j = 0..M, j != i")
      ->delimiter(',');
  cmd->add_flag("--from-costs", f.from_costs, "Derive A from the delay costs or B from rbar");
  cmd->add_option("--sigma", f.sigma, "sigma_i for --from-costs")->check(CLI::IsMember({"default", "estimate"}));
  cmd->add_option("--sigma-method", f.sigma_method, "Estimator for --sigma estimate")
      ->check(CLI::IsMember({"overshoot", "renewal"}));
  cmd->add_option("--sigma-samples", f.sigma_samples, "Samples for --sigma estimate");
  cmd->add_option("--max-horizon", f.max_horizon, "Hard cap on the stopping time")->check(CLI::PositiveNumber);
}

std::string file_digest(const std::string& path) { return hex64(fnv1a(read_text(path))); }

std::optional<CostSpec> build_costs(const ModelSpec& model, const CostFlags& f, Config& cfg) {
  if (!f.file.empty()) {
    cfg.set("costs", file_digest(f.file));
    return load_costs(model, f.file);
  }
  if (!std::isnan(f.cbar)) {
    if (!(f.cbar >= 0.0)) throw Error(ErrorCode::NegativeEntry, "--cbar must be nonnegative");
    cfg.set("cbar", f.cbar);
    cfg.set("m", std::to_string(f.m));
    return uniform_costs(model, f.cbar, f.m);
  }
  return std::nullopt;
}

const CostSpec& require_costs(const std::optional<CostSpec>& costs) {
  if (!costs) throw Error(ErrorCode::FormatError, "this command needs --costs or --cbar");
  return *costs;
}

std::vector<double> per_class(const std::vector<double>& v, int M, const char* what) {
  std::vector<double> out(static_cast<std::size_t>(M) + 1, 1.0);
  if (v.size() == 1) {
    for (int i = 1; i <= M; ++i) out[static_cast<std::size_t>(i)] = v[0];
  } else if (v.size() == static_cast<std::size_t>(M)) {
    for (int i = 1; i <= M; ++i) out[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i - 1)];
  } else {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " needs 1 or M values");
  }
  return out;
}

Eigen::MatrixXd b_matrix(const std::vector<double>& v, int M) {
  Eigen::MatrixXd B = Eigen::MatrixXd::Constant(M + 1, M + 1, std::nan(""));
  if (v.size() != 1 && v.size() != static_cast<std::size_t>(M * M))
    throw Error(ErrorCode::DimensionMismatch, "--B needs 1 or M*M values");
  std::size_t k = 0;
  for (int i = 1; i <= M; ++i)
    for (int j = 0; j <= M; ++j)
      if (j != i) B(i, j) = v.size() == 1 ? v[0] : v[k++];
  return B;
}

StrategySpec build_strategy(const ModelSpec& model, const StrategyFlags& f, const std::optional<CostSpec>& costs,
                            const CommonFlags& common, Config& cfg, std::vector<std::string>& notes) {
  const int M = model.num_classes;
  cfg.set("strategy", f.kind);
  cfg.set("max_horizon", std::to_string(f.max_horizon));
  if (f.kind == "pi") {
    std::vector<double> A;
    if (!f.A.empty()) {
      A = per_class(f.A, M, "--A");
    } else if (f.from_costs) {
      const CostSpec& c = require_costs(costs);
      const ChainFacts facts = chain_facts(model);
      const LimitTable lim = limits(model, facts);
      std::vector<double> sigma = sigma_default_vector(model, c, lim);
      cfg.set("sigma", f.sigma);
      if (f.sigma == "estimate") {
        SigmaParams prm;
        prm.seed = common.seed;
        prm.samples = f.sigma_samples;
        prm.threads = common.threads;
        prm.A_small = f.A_small;
        cfg.set("sigma_method", f.sigma_method);
        cfg.set("sigma_samples", std::to_string(f.sigma_samples));
        const auto method = f.sigma_method == "renewal" ? SigmaMethod::RenewalMc : SigmaMethod::OvershootMc;
        for (int i = 1; i <= M; ++i) {
          const auto est = estimate_sigma(model, c, lim, i, method, prm);
          sigma[static_cast<std::size_t>(i)] = est.sigma;
          notes.push_back("sigma_" + std::to_string(i) + " = " + fmt(est.sigma) + " (se " + fmt(est.se) + ")");
        }
      }
      A = a_from_c(model, c, lim, sigma);
    } else {
      throw Error(ErrorCode::FormatError, "--strategy pi needs --A or --from-costs");
    }
    cfg.set_list("A", std::vector<double>(A.begin() + 1, A.end()));
    return StrategySpec::pi(A, f.max_horizon);
  }
  Eigen::MatrixXd B;
  if (!f.B.empty()) {
    B = b_matrix(f.B, M);
  } else if (f.from_costs) {
    const auto map = b_from_rbar(model, require_costs(costs), absorption_probabilities(model).nu);
    for (const auto& w : map.warnings) notes.push_back("warning: " + w);
    B = map.B;
  } else {
    throw Error(ErrorCode::FormatError, "--strategy llr needs --B or --from-costs");
  }
  std::vector<double> flat;
  for (int i = 1; i <= M; ++i)
    for (int j = 0; j <= M; ++j)
      if (j != i) flat.push_back(B(i, j));
  cfg.set_list("B", flat);
  return StrategySpec::llr(B, f.max_horizon);
}

// ---- commands ----

int cmd_validate(const CommonFlags& f) {
  const ModelSpec model = load_model(f.model, false);
  const auto rep = validate(model);
  Output out(f.out);
  if (!rep.ok()) {
    for (const auto& issue : rep.issues) std::cerr << to_string(issue.code) << ": " << issue.message << '\n';
    return kExitConfig;
  }
  const auto abs = absorption_probabilities(model);
  *out.os << "valid: " << model.size() << " states, M = " << model.num_classes << '\n';
  for (int i = 1; i <= model.num_classes; ++i) *out.os << "nu_" << i << " = " << fmt(abs.nu(i)) << '\n';
  return 0;
}

int cmd_limits(const CommonFlags& f, const std::string& mode_name) {
  const ModelSpec model = load_model(f.model);
  const VarrhoMode mode = mode_name == "closed-form" ? VarrhoMode::ClosedForm
                          : mode_name == "tail"      ? VarrhoMode::TailEstimate
                                                     : VarrhoMode::Auto;
  const ChainFacts facts = chain_facts(model);
  const LimitTable t = limits(model, facts, mode);
  Config cfg;
  cfg.set("command", "limits");
  cfg.set("model", file_digest(f.model));
  cfg.set("varrho", mode_name);
  Output out(f.out);
  CsvWriter csv(*out.os);
  cfg.write_header(csv);
  csv.comment("shape", t.shape == LimitTable::Shape::Example1 ? "example1" : "example2");
  for (int i = 1; i <= t.M; ++i) {
    std::string js;
    for (int j : t.jstar[static_cast<std::size_t>(i)]) js += (js.empty() ? "" : " ") + std::to_string(j);
    csv.comment("class " + std::to_string(i), "nu=" + fmt(t.nu(i)) + " varrho=" + fmt(t.varrho[static_cast<std::size_t>(i)]) +
                                                  " l=" + fmt(t.lstar[static_cast<std::size_t>(i)]) + " jstar=" + js);
  }
  csv.row({"i", "j", "q", "q0", "varrho_j", "l", "in_gamma", "is_jstar"});
  for (int i = 1; i <= t.M; ++i)
    for (int j = 0; j <= t.M; ++j) {
      if (j == i) continue;
      const double q0 = t.shape == LimitTable::Shape::Example2 && j > 0 ? t.q0(i, j) : std::nan("");
      const double vr = j > 0 ? t.varrho[static_cast<std::size_t>(j)] : std::nan("");
      csv.row({std::to_string(i), std::to_string(j), fmt(t.q(i, j)), fmt(q0), fmt(vr), fmt(t.l(i, j)),
               t.in_gamma(i, j) ? "1" : "0", t.is_jstar(i, j) ? "1" : "0"});
    }
  return 0;
}

int cmd_llr_convergence(const CommonFlags& f, std::vector<std::size_t> horizons, std::size_t paths,
                        const std::string& sampling) {
  const ModelSpec model = load_model(f.model);
  const auto how = sampling == "per-class" ? LimitMcSampling::PerClass : LimitMcSampling::Partition;
  const LimitMcReport rep = limits_mc(model, horizons, paths, f.seed, how, f.threads);
  std::optional<LimitTable> theory;
  try {
    theory = limits(model, chain_facts(model));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ShapeMismatch) throw;
  }
  Config cfg;
  cfg.set("command", "llr-convergence");
  cfg.set("model", file_digest(f.model));
  cfg.set("seed", std::to_string(f.seed));
  cfg.set("paths", std::to_string(paths));
  cfg.set("sampling", sampling);
  cfg.set_list("horizons", rep.horizons);
  Output out(f.out);
  CsvWriter csv(*out.os);
  cfg.write_header(csv);
  if (rep.degenerate) csv.comment("warning", "every sample is constant; the model is degenerate");
  csv.row({"process", "i", "j", "n", "mean", "sd", "count", "theory"});
  for (std::size_t h = 0; h < rep.horizons.size(); ++h)
    for (int i = 1; i <= rep.M; ++i)
      for (int j = 0; j <= rep.M; ++j) {
        if (j == i) continue;
        const auto& s = rep.at(i, j, h);
        csv.row({"lambda", std::to_string(i), std::to_string(j), std::to_string(rep.horizons[h]), fmt(s.mean), fmt(s.sd),
                 std::to_string(s.count), fmt(theory ? theory->l(i, j) : std::nan(""))});
      }
  return 0;
}

int cmd_run_strategy(const CommonFlags& f, const CostFlags& cf, const StrategyFlags& sf, std::uint32_t path_id,
                     bool trajectory) {
  const ModelSpec model = load_model(f.model);
  Config cfg;
  cfg.set("command", "run-strategy");
  cfg.set("model", file_digest(f.model));
  cfg.set("seed", std::to_string(f.seed));
  cfg.set("path_id", std::to_string(path_id));
  const auto costs = build_costs(model, cf, cfg);
  std::vector<std::string> notes;
  const StrategySpec spec = build_strategy(model, sf, costs, f, cfg, notes);
  const ChainSampler sampler(model);
  const PosteriorFilter filter(model);
  PathSimulator sim(sampler, make_rng(f.seed, Stream::Paths, path_id));

  Output out(f.out);
  CsvWriter csv(*out.os);
  cfg.write_header(csv);
  for (const auto& n : notes) csv.comment("note", n);
  const int M = model.num_classes;
  std::vector<std::vector<std::string>> rows;
  auto observe = [&](const PosteriorState& s) {
    if (!trajectory) return;
    const auto pi = s.class_posteriors();
    const LlrView v = llr(s, LlrMode::Extended);
    std::vector<std::string> r{std::to_string(s.n)};
    for (double p : pi) r.push_back(fmt(p));
    for (int i = 1; i <= M; ++i)
      for (int j = 0; j <= M; ++j)
        if (j != i) r.push_back(fmt(v.lambda(i, j)));
    for (int i = 1; i <= M; ++i) r.push_back(fmt(v.phi[static_cast<std::size_t>(i)]));
    for (int i = 1; i <= M; ++i) r.push_back(fmt(v.psi[static_cast<std::size_t>(i)]));
    rows.push_back(std::move(r));
  };
  Decision d;
  if (const auto* p = std::get_if<StrategySpec::PiThreshold>(&spec.kind)) {
    for (std::size_t i = 1; i < p->A.size(); ++i)
      if (!(p->A[i] > 0.0)) throw Error(ErrorCode::BadThreshold, "A_i must be positive");
    d = run_strategy(filter, sim, PiRule{p->A}, spec.max_horizon, observe);
    if (!d.capped) d.overshoot = detail::phi(d.state, d.d) + std::log(p->A[static_cast<std::size_t>(d.d)]);
  } else {
    const auto& B = std::get<StrategySpec::LlrThreshold>(spec.kind).B;
    check_b(B);
    d = run_strategy(filter, sim, LlrRule{B}, spec.max_horizon, observe);
  }
  const std::size_t y_tau = sim.state();
  sim.finish_absorption();
  std::string fired;
  for (int i : d.fired_by) fired += (fired.empty() ? "" : " ") + std::to_string(i);
  csv.comment("tau", std::to_string(d.tau));
  csv.comment("d", std::to_string(d.d));
  csv.comment("capped", d.capped ? "1" : "0");
  csv.comment("fired_by", fired);
  csv.comment("y_tau", model.states[y_tau]);
  csv.comment("theta", std::to_string(sim.theta()));
  csv.comment("mu", std::to_string(sim.mu()));
  csv.comment("overshoot", fmt(d.overshoot));
  if (trajectory) {
    std::vector<std::string> head{"n"};
    for (int i = 0; i <= M; ++i) head.push_back("pi_" + std::to_string(i));
    for (int i = 1; i <= M; ++i)
      for (int j = 0; j <= M; ++j)
        if (j != i) head.push_back("lambda_" + std::to_string(i) + "_" + std::to_string(j));
    for (int i = 1; i <= M; ++i) head.push_back("phi_" + std::to_string(i));
    for (int i = 1; i <= M; ++i) head.push_back("psi_" + std::to_string(i));
    csv.row(head);
    for (const auto& r : rows) csv.row(r);
  } else {
    csv.row({"tau", "d", "capped", "theta", "mu", "overshoot"});
    csv.row({std::to_string(d.tau), std::to_string(d.d), d.capped ? "1" : "0", std::to_string(sim.theta()),
             std::to_string(sim.mu()), fmt(d.overshoot)});
  }
  return 0;
}

void write_report(CsvWriter& csv, const ModelSpec& model, const RiskReport& r, bool conditionals) {
  auto stat_row = [&](const std::string& metric, const std::string& i, const std::string& j, const std::string& y,
                      const SampleStats& s) {
    csv.row({metric, i, j, y, fmt(s.mean), fmt(s.se()), fmt(s.ci_lo()), fmt(s.ci_hi())});
  };
  csv.row({"metric", "i", "j", "y", "mean", "se", "ci_lo", "ci_hi"});
  stat_row("bayes", "", "", "", r.bayes);
  stat_row("edd", "", "", "", r.edd);
  csv.row({"capped_fraction", "", "", "", fmt(r.capped_fraction()), "", "", ""});
  for (std::size_t y = 0; y < model.size(); ++y)
    for (int i = 1; i <= r.M; ++i)
      if (model.class_of[y] != i) stat_row("tdl", std::to_string(i), "", model.states[y], r.tdl[y][static_cast<std::size_t>(i)]);
  for (int i = 1; i <= r.M; ++i)
    for (int j = 0; j <= r.M; ++j)
      if (j != i) stat_row("tdl_class", std::to_string(i), std::to_string(j), "", r.tdl_class[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]);
  for (int i = 1; i <= r.M; ++i) stat_row("r_i_a", std::to_string(i), "", "", r.r_i_a[static_cast<std::size_t>(i)]);
  for (int i = 1; i <= r.M; ++i) stat_row("r_i_1", std::to_string(i), "", "", r.r_i_1[static_cast<std::size_t>(i)]);
  if (!conditionals) return;
  for (int i = 1; i <= r.M; ++i) {
    const auto si = static_cast<std::size_t>(i);
    stat_row("edd_conditional", std::to_string(i), "", "", r.edd_conditional[si]);
    stat_row("u_conditional", std::to_string(i), "", "", r.u_conditional(i));
    csv.row({"count_by_mu", std::to_string(i), "", "", std::to_string(r.count_by_mu[si]), "", "", ""});
  }
}

void write_table(std::ostream& os, const RiskReport& r) {
  auto line = [&](const std::string& name, const SampleStats& s) {
    os << "  " << name << std::string(name.size() < 22 ? 22 - name.size() : 1, ' ') << fmt(s.mean, 6) << "  ("
       << fmt(s.ci_lo(), 6) << ", " << fmt(s.ci_hi(), 6) << ")\n";
  };
  os << "paths " << r.paths << ", capped " << r.capped << '\n';
  line("Bayes risk u", r.bayes);
  line("EDD", r.edd);
  for (int i = 1; i <= r.M; ++i) line("R_" + std::to_string(i) + "^(a)", r.r_i_a[static_cast<std::size_t>(i)]);
  for (int i = 1; i <= r.M; ++i)
    for (int j = 0; j <= r.M; ++j)
      if (j != i) line("R~_" + std::to_string(j) + std::to_string(i), r.tdl_class[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]);
}

int cmd_evaluate(const CommonFlags& f, const CostFlags& cf, const StrategyFlags& sf, std::size_t paths, bool conditionals,
                 const std::string& format) {
  const ModelSpec model = load_model(f.model);
  Config cfg;
  cfg.set("command", "evaluate");
  cfg.set("model", file_digest(f.model));
  cfg.set("seed", std::to_string(f.seed));
  cfg.set("paths", std::to_string(paths));
  const auto costs = build_costs(model, cf, cfg);
  const CostSpec& c = require_costs(costs);
  std::vector<std::string> notes;
  const StrategySpec spec = build_strategy(model, sf, costs, f, cfg, notes);
  EvalOptions opt;
  opt.threads = f.threads;
  const RiskReport r = evaluate(model, c, spec, paths, f.seed, opt);
  Output out(f.out);
  if (format == "table") {
    *out.os << "config_hash " << cfg.hash() << ", seed " << f.seed << '\n';
    write_table(*out.os, r);
    return 0;
  }
  CsvWriter csv(*out.os);
  cfg.write_header(csv);
  for (const auto& n : notes) csv.comment("note", n);
  write_report(csv, model, r, conditionals);
  return 0;
}

int cmd_estimate_sigma(const CommonFlags& f, const CostFlags& cf, const std::string& method, std::size_t samples,
                       double A_small, int only_class) {
  const ModelSpec model = load_model(f.model);
  Config cfg;
  cfg.set("command", "estimate-sigma");
  cfg.set("model", file_digest(f.model));
  cfg.set("seed", std::to_string(f.seed));
  cfg.set("method", method);
  cfg.set("samples", std::to_string(samples));
  cfg.set("A_small", A_small);
  const auto costs = build_costs(model, cf, cfg);
  const CostSpec c = costs ? *costs : uniform_costs(model, 0.0);
  const LimitTable lim = limits(model, chain_facts(model));
  SigmaParams prm;
  prm.seed = f.seed;
  prm.samples = samples;
  prm.A_small = A_small;
  prm.threads = f.threads;
  std::vector<SigmaMethod> methods;
  if (method == "overshoot" || method == "both") methods.push_back(SigmaMethod::OvershootMc);
  if (method == "renewal" || method == "both") methods.push_back(SigmaMethod::RenewalMc);
  if (method == "default") methods.push_back(SigmaMethod::Default);
  std::vector<SigmaEstimate> rows;
  for (int i = 1; i <= model.num_classes; ++i) {
    if (only_class > 0 && i != only_class) continue;
    for (auto m : methods) rows.push_back(estimate_sigma(model, c, lim, i, m, prm));
  }
  Output out(f.out);
  CsvWriter csv(*out.os);
  cfg.write_header(csv);
  csv.row({"i", "j", "method", "a", "sigma", "se", "samples", "A_used"});
  for (const auto& e : rows)
    csv.row({std::to_string(e.cls), std::to_string(e.j), to_string(e.method), fmt(e.a), fmt(e.sigma), fmt(e.se),
             std::to_string(e.samples), fmt(e.A_used)});
  return 0;
}

PolicyLookup parse_lookup(const std::string& s) {
  if (s == "interpolate") return PolicyLookup::Interpolate;
  if (s == "nearest") return PolicyLookup::Nearest;
  return PolicyLookup::Lookahead;
}

int cmd_optimal(const CommonFlags& f, const CostFlags& cf, const ValueIterationParams& prm, const std::string& dump,
                std::size_t paths, bool seeded, const std::string& lookup) {
  const ModelSpec model = load_model(f.model);
  Config cfg;
  cfg.set("command", "optimal");
  cfg.set("model", file_digest(f.model));
  cfg.set("resolution", std::to_string(prm.resolution));
  cfg.set("tol", prm.tol);
  cfg.set("max_iters", std::to_string(prm.max_iters));
  const CostSpec c = require_costs(build_costs(model, cf, cfg));
  const OptimalSolution sol = value_iteration(model, c, prm);
  std::optional<RiskReport> rep;
  if (paths > 0) {
    if (!seeded) throw Error(ErrorCode::FormatError, "--paths needs --seed");
    cfg.set("seed", std::to_string(f.seed));
    cfg.set("paths", std::to_string(paths));
    cfg.set("lookup", lookup);
    rep = evaluate_policy(model, c, sol, paths, f.seed, parse_lookup(lookup), kDefaultMaxHorizon, f.threads);
  }
  std::size_t stop_nodes = 0;
  for (std::size_t n = 0; n < sol.grid.size(); ++n) stop_nodes += sol.stops(n) ? 1 : 0;

  Output out(f.out);
  CsvWriter csv(*out.os);
  cfg.write_header(csv);
  if (sol.degenerate) csv.comment("warning", "c is zero everywhere; V is identically zero");
  csv.row({"key", "value"});
  csv.row({"nodes", std::to_string(sol.grid.size())});
  csv.row({"iterations", std::to_string(sol.iterations)});
  csv.row({"residual", fmt(sol.residual)});
  csv.row({"converged", sol.converged ? "1" : "0"});
  csv.row({"stop_nodes", std::to_string(stop_nodes)});
  csv.row({"value_at_eta", fmt(sol.value_at_eta)});
  if (rep) {
    csv.row({"policy_risk", fmt(rep->bayes.mean)});
    csv.row({"policy_risk_ci_lo", fmt(rep->bayes.ci_lo())});
    csv.row({"policy_risk_ci_hi", fmt(rep->bayes.ci_hi())});
    csv.row({"policy_capped_fraction", fmt(rep->capped_fraction())});
  }
  if (!dump.empty()) {
    Output d(dump);
    CsvWriter dc(*d.os);
    cfg.write_header(dc);
    std::vector<std::string> head{"node"};
    for (const auto& s : model.states) head.push_back("pi_" + s);
    head.insert(head.end(), {"value", "stop_cost", "decision"});
    dc.row(head);
    for (std::size_t n = 0; n < sol.grid.size(); ++n) {
      std::vector<std::string> r{std::to_string(n)};
      for (double p : sol.grid.point(n)) r.push_back(fmt(p));
      r.insert(r.end(), {fmt(sol.value[n]), fmt(sol.stop_cost[n]), std::to_string(sol.decision[n])});
      dc.row(r);
    }
  }
  return 0;
}

int cmd_compare_optimal(const CommonFlags& f, const CostFlags& cf, const std::vector<double>& cbars, std::size_t asym_paths,
                        std::size_t opt_paths, const ValueIterationParams& prm, const std::string& lookup) {
  if (cbars.empty()) throw Error(ErrorCode::FormatError, "--cbar-list must not be empty");
  const ModelSpec model = load_model(f.model);
  Config cfg;
  cfg.set("command", "compare-optimal");
  cfg.set("model", file_digest(f.model));
  cfg.set("seed", std::to_string(f.seed));
  cfg.set_list("cbar_list", cbars);
  cfg.set("m", std::to_string(cf.m));
  cfg.set("paths_asymptotic", std::to_string(asym_paths));
  cfg.set("paths_optimal", std::to_string(opt_paths));
  cfg.set("resolution", std::to_string(prm.resolution));
  cfg.set("tol", prm.tol);
  cfg.set("lookup", lookup);
  const LimitTable lim = limits(model, chain_facts(model));
  EvalOptions opt;
  opt.threads = f.threads;

  Output out(f.out);
  CsvWriter csv(*out.os);
  cfg.write_header(csv);
  csv.row({"cbar", "asymptotic", "asymptotic_ci_lo", "asymptotic_ci_hi", "optimal", "optimal_ci_lo", "optimal_ci_hi",
           "ratio", "value_at_eta", "asymptotic_capped", "optimal_capped"});
  for (double cbar : cbars) {
    const CostSpec c = uniform_costs(model, cbar, cf.m);
    const auto A = a_from_c(model, c, lim, sigma_default_vector(model, c, lim));
    const RiskReport asym = evaluate(model, c, StrategySpec::pi(A), asym_paths, f.seed, opt);
    const OptimalSolution sol = value_iteration(model, c, prm);
    const RiskReport best = evaluate_policy(model, c, sol, opt_paths, f.seed, parse_lookup(lookup), kDefaultMaxHorizon, f.threads);
    csv.row({fmt(cbar), fmt(asym.bayes.mean), fmt(asym.bayes.ci_lo()), fmt(asym.bayes.ci_hi()), fmt(best.bayes.mean),
             fmt(best.bayes.ci_lo()), fmt(best.bayes.ci_hi()), fmt(asym.bayes.mean / best.bayes.mean), fmt(sol.value_at_eta),
             fmt(asym.capped_fraction()), fmt(best.capped_fraction())});
    out.os->flush();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential change detection and identification on hidden Markov models"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  CommonFlags common;
  CostFlags cost_flags;
  StrategyFlags strat;

  auto* validate_cmd = app.add_subcommand("validate", "Check a model file against every structural assumption");
  add_model(validate_cmd, common);

  std::string varrho_mode = "auto";
  auto* limits_cmd = app.add_subcommand("limits", "Exact LLR drift limits l(i,j) as CSV");
  add_model(limits_cmd, common);
  limits_cmd->add_option("--varrho", varrho_mode, "Tail-rate method")->check(CLI::IsMember({"auto", "closed-form", "tail"}));

  std::vector<std::size_t> horizons{500, 1000, 1500};
  std::size_t paths = 1000;
  std::string sampling = "partition";
  auto* conv_cmd = app.add_subcommand("llr-convergence", "Monte Carlo mean and sd of Lambda_n(i,j)/n");
  add_model(conv_cmd, common);
  add_seed(conv_cmd, common);
  conv_cmd->add_option("--horizons", horizons, "Comma-separated horizons")->delimiter(',');
  conv_cmd->add_option("--paths", paths, "Simulated paths");
  conv_cmd->add_option("--sampling", sampling, "partition: split paths by mu; per-class: paths per class")
      ->check(CLI::IsMember({"partition", "per-class"}));

  std::uint32_t path_id = 0;
  bool trajectory = false;
  auto* run_cmd = app.add_subcommand("run-strategy", "Run one strategy on one simulated path");
  add_model(run_cmd, common);
  add_seed(run_cmd, common);
  add_costs(run_cmd, cost_flags);
  add_strategy(run_cmd, strat);
  run_cmd->add_option("--path-id", path_id, "Substream of the path");
  run_cmd->add_flag("--trajectory", trajectory, "Dump Pi~, Lambda, Phi, Psi at every step");

  bool conditionals = false;
  std::string format = "csv";
  auto* eval_cmd = app.add_subcommand("evaluate", "Monte Carlo risk of a strategy");
  add_model(eval_cmd, common);
  add_seed(eval_cmd, common);
  add_costs(eval_cmd, cost_flags);
  add_strategy(eval_cmd, strat);
  eval_cmd->add_option("--paths", paths, "Simulated paths");
  eval_cmd->add_flag("--report-conditionals", conditionals, "Also report D_i and u_i by class");
  eval_cmd->add_option("--format", format, "csv or table")->check(CLI::IsMember({"csv", "table"}));

  std::string sigma_method = "both";
  std::size_t sigma_samples = 100'000;
  double A_small = 1e-6;
  int only_class = 0;
  auto* sigma_cmd = app.add_subcommand("estimate-sigma", "Overshoot constant sigma_i");
  add_model(sigma_cmd, common);
  add_seed(sigma_cmd, common);
  add_costs(sigma_cmd, cost_flags);
  sigma_cmd->add_option("--method", sigma_method, "overshoot, renewal, both or default")
      ->check(CLI::IsMember({"overshoot", "renewal", "both", "default"}));
  sigma_cmd->add_option("--samples", sigma_samples, "Samples per class");
  sigma_cmd->add_option("--A-small", A_small, "Threshold used by the overshoot method");
  sigma_cmd->add_option("--class", only_class, "Only this class");

  ValueIterationParams vi;
  std::string dump;
  std::string lookup = "lookahead";
  std::size_t policy_paths = 0;
  auto* opt_cmd = app.add_subcommand("optimal", "Value iteration on the discretised posterior simplex");
  add_model(opt_cmd, common);
  add_costs(opt_cmd, cost_flags);
  opt_cmd->add_option("--resolution", vi.resolution, "Lattice points per unit on each axis");
  opt_cmd->add_option("--tol", vi.tol, "Sup-norm stopping tolerance");
  opt_cmd->add_option("--max-iters", vi.max_iters, "Sweep cap");
  opt_cmd->add_option("--dump-region", dump, "Write every node with its value and decision to this CSV");
  opt_cmd->add_option("--paths", policy_paths, "Also simulate the policy on this many paths");
  auto* opt_seed = opt_cmd->add_option("--seed", common.seed, "Seed for --paths");
  opt_cmd->add_option("--threads", common.threads, "Worker threads");
  opt_cmd->add_option("--lookup", lookup, "Policy lookup")->check(CLI::IsMember({"lookahead", "interpolate", "nearest"}));

  std::vector<double> cbars{0.5, 0.1, 0.05, 0.01, 0.005};
  std::size_t asym_paths = 100'000, opt_paths = 10'000;
  auto* cmp_cmd = app.add_subcommand("compare-optimal", "Asymptotic strategy against the value-iteration policy over a cbar sweep");
  add_model(cmp_cmd, common);
  add_seed(cmp_cmd, common);
  cmp_cmd->add_option("--cbar-list", cbars, "Comma-separated delay costs")->delimiter(',');
  cmp_cmd->add_option("--m", cost_flags.m, "Moment order");
  cmp_cmd->add_option("--paths-asymptotic", asym_paths, "Paths for the asymptotic strategy");
  cmp_cmd->add_option("--paths-optimal", opt_paths, "Paths for the grid policy");
  cmp_cmd->add_option("--resolution", vi.resolution, "Lattice resolution");
  cmp_cmd->add_option("--tol", vi.tol, "Value-iteration tolerance");
  cmp_cmd->add_option("--lookup", lookup, "Policy lookup")->check(CLI::IsMember({"lookahead", "interpolate", "nearest"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    vi.threads = common.threads;
    if (validate_cmd->parsed()) return cmd_validate(common);
    if (limits_cmd->parsed()) return cmd_limits(common, varrho_mode);
    if (conv_cmd->parsed()) return cmd_llr_convergence(common, horizons, paths, sampling);
    if (run_cmd->parsed()) return cmd_run_strategy(common, cost_flags, strat, path_id, trajectory);
    if (eval_cmd->parsed()) return cmd_evaluate(common, cost_flags, strat, paths, conditionals, format);
    if (sigma_cmd->parsed()) return cmd_estimate_sigma(common, cost_flags, sigma_method, sigma_samples, A_small, only_class);
    if (opt_cmd->parsed()) return cmd_optimal(common, cost_flags, vi, dump, policy_paths, opt_seed->count() > 0, lookup);
    if (cmp_cmd->parsed()) return cmd_compare_optimal(common, cost_flags, cbars, asym_paths, opt_paths, vi, lookup);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_numerical(e.code()) ? kExitNumerical : kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

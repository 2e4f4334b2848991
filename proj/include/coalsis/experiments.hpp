// ============================================================================
//  coalsis/experiments.hpp
//
//  Experiment drivers behind the command-line front end: likelihood surfaces
//  over mutation-rate grids, per-level weight-variance curves, truncated-run
//  cost convergence sweeps, benchmark data synthesis, and proposal-table
//  precomputation.  Every driver consumes a validated ExperimentConfig (or a
//  command-specific spec), uses seeds derived deterministically from the
//  master seed, and returns a CsvTable; file placement and plotting are the
//  caller's concern.
//
//  Mutation-rate conventions (documented in the README):
//   * site-model samples ("fa-site", type space 2^sites): theta values in
//     configs and grids are PER-SITE rates; the coalescent driving rate is
//     theta * sites.  This matches the benchmark's "rate 1/2 per site" and
//     makes the replicate-schedule switch point reproduce the published
//     draw-count reductions.
//   * dense models ("fa-dense") and the infinite-sites model ("ism"): theta
//     is the total driving rate.
//
//  Standard errors: schedules with independent replicates use the in-run
//  i.i.d. standard error; the boosted schedule and any resampled run repeat
//  the whole experiment se_repetitions times and use the spread of the
//  repetition estimates (replicates are dependent after a resampling step).
// ============================================================================
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coalsis/common.hpp"
#include "coalsis/csv.hpp"
#include "coalsis/engine.hpp"
#include "coalsis/huw.hpp"
#include "coalsis/ism.hpp"
#include "coalsis/logspace.hpp"
#include "coalsis/proposals.hpp"
#include "coalsis/sample_io.hpp"
#include "coalsis/schedule.hpp"
#include "coalsis/transitions.hpp"

namespace coalsis {

// --- configuration -------------------------------------------------------------

struct ExperimentConfig {
  std::string model = "fa-site";  // fa-site | fa-dense | ism
  std::string sample_path;
  std::string pmatrix_path;    // fa-dense
  std::string huw_table_path;  // ism with the precomputed-table proposal
  std::string proposal = "sd";  // fa: gt|sd|optimal; ism: gt|sd|huw

  std::vector<double> theta_grid;  // surface: strictly increasing, positive
  std::vector<std::string> schedules{"full", "boosted", "small", "uniform"};
  std::string resample = "none";  // none | ess
  double ess_fraction = 0.1;
  int64_t gamma_small = 0;  // 0 = model/size default
  int64_t gamma_big = 0;    // 0 = model/size default
  double chi = 0.1;
  int64_t replicates = 0;      // varcurve / costconv; 0 = gamma_big default
  int64_t mutation_cap = 1000;  // GT rejection control; 0 disables
  int64_t se_repetitions = 20;  // B for dependent-run standard errors

  std::vector<int64_t> n_list;  // costconv sweep
  double horizon_t = 0.5;       // costconv truncation point
  double theta0 = 0.0;  // varcurve / costconv rate; 0 = from data (FA header, ISM Watterson)

  uint64_t master_seed = 1;
  int workers = 1;
  bool timing = true;
};

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += format_msg(i ? ",%.17g" : "%.17g", v[i]);
  return out;
}
inline std::string join_ints(const std::vector<int64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i)
    out += format_msg(i ? ",%lld" : "%lld", static_cast<long long>(v[i]));
  return out;
}
inline std::string join_strings(const std::vector<std::string>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += v[i];
  }
  return out;
}

template <class Fn>
void split_list(const std::string& text, Fn&& per_item) {
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    per_item(text.substr(pos, comma - pos));
    pos = comma + 1;
    if (comma == text.size()) break;
  }
}

inline double parse_double_value(const std::string& key, const std::string& value) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  check(used == value.size() && !value.empty(),
        format_msg("config key '%s': '%s' is not a number", key.c_str(), value.c_str()));
  return v;
}

inline int64_t parse_int_value(const std::string& key, const std::string& value) {
  size_t used = 0;
  int64_t v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  check(used == value.size() && !value.empty(),
        format_msg("config key '%s': '%s' is not an integer", key.c_str(), value.c_str()));
  return v;
}

inline uint64_t parse_uint_value(const std::string& key, const std::string& value) {
  size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  check(used == value.size() && !value.empty(),
        format_msg("config key '%s': '%s' is not an unsigned integer", key.c_str(),
                   value.c_str()));
  return v;
}

}  // namespace detail

inline constexpr const char* kConfigVersion = "1";

// Flat key-value experiment file: "key = value" lines, '#' comments, blank
// lines allowed.  The version key is mandatory and unknown keys are errors.
inline ExperimentConfig parse_experiment_config(const std::string& text,
                                                const std::string& source) {
  std::map<std::string, std::string> kv;
  size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + (end < text.size() ? 1 : 0);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const size_t eq = line.find('=');
    check(eq != std::string::npos,
          format_msg("%s:%zu: expected 'key = value'", source.c_str(), line_no));
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    check(!key.empty(), format_msg("%s:%zu: empty key", source.c_str(), line_no));
    check(!kv.count(key), format_msg("%s:%zu: duplicate key '%s'", source.c_str(), line_no,
                                     key.c_str()));
    kv[key] = value;
  }

  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  auto version = take("version");
  check(version.has_value(), format_msg("%s: missing mandatory 'version' key", source.c_str()));
  check(*version == kConfigVersion,
        format_msg("%s: config version '%s' not supported (expected %s)", source.c_str(),
                   version->c_str(), kConfigVersion));

  ExperimentConfig cfg;
  if (auto v = take("model")) cfg.model = *v;
  if (auto v = take("sample")) cfg.sample_path = *v;
  if (auto v = take("pmatrix")) cfg.pmatrix_path = *v;
  if (auto v = take("huw_table")) cfg.huw_table_path = *v;
  if (auto v = take("proposal")) cfg.proposal = *v;
  if (auto v = take("theta_grid")) {
    cfg.theta_grid.clear();
    detail::split_list(*v, [&](const std::string& item) {
      cfg.theta_grid.push_back(detail::parse_double_value("theta_grid", item));
    });
  }
  if (auto v = take("schedules")) {
    cfg.schedules.clear();
    detail::split_list(*v, [&](const std::string& item) {
      (void)parse_schedule(item);  // validate eagerly
      cfg.schedules.push_back(item);
    });
  }
  if (auto v = take("resample")) cfg.resample = *v;
  if (auto v = take("ess_fraction")) cfg.ess_fraction = detail::parse_double_value("ess_fraction", *v);
  if (auto v = take("gamma_small")) cfg.gamma_small = detail::parse_int_value("gamma_small", *v);
  if (auto v = take("gamma_big")) cfg.gamma_big = detail::parse_int_value("gamma_big", *v);
  if (auto v = take("chi")) cfg.chi = detail::parse_double_value("chi", *v);
  if (auto v = take("replicates")) cfg.replicates = detail::parse_int_value("replicates", *v);
  if (auto v = take("mutation_cap")) cfg.mutation_cap = detail::parse_int_value("mutation_cap", *v);
  if (auto v = take("se_repetitions"))
    cfg.se_repetitions = detail::parse_int_value("se_repetitions", *v);
  if (auto v = take("n_list")) {
    cfg.n_list.clear();
    detail::split_list(*v, [&](const std::string& item) {
      cfg.n_list.push_back(detail::parse_int_value("n_list", item));
    });
  }
  if (auto v = take("horizon_t")) cfg.horizon_t = detail::parse_double_value("horizon_t", *v);
  if (auto v = take("theta0")) cfg.theta0 = detail::parse_double_value("theta0", *v);
  if (auto v = take("master_seed")) cfg.master_seed = detail::parse_uint_value("master_seed", *v);
  if (auto v = take("workers"))
    cfg.workers = static_cast<int>(detail::parse_int_value("workers", *v));
  if (auto v = take("timing")) {
    check(*v == "on" || *v == "off",
          format_msg("config key 'timing': expected on|off, got '%s'", v->c_str()));
    cfg.timing = (*v == "on");
  }
  check(kv.empty(),
        format_msg("%s: unknown config key '%s'", source.c_str(),
                   kv.empty() ? "" : kv.begin()->first.c_str()));
  return cfg;
}

inline std::string format_experiment_config(const ExperimentConfig& cfg) {
  std::string out;
  out += format_msg("version = %s\n", kConfigVersion);
  out += format_msg("model = %s\n", cfg.model.c_str());
  if (!cfg.sample_path.empty()) out += format_msg("sample = %s\n", cfg.sample_path.c_str());
  if (!cfg.pmatrix_path.empty()) out += format_msg("pmatrix = %s\n", cfg.pmatrix_path.c_str());
  if (!cfg.huw_table_path.empty())
    out += format_msg("huw_table = %s\n", cfg.huw_table_path.c_str());
  out += format_msg("proposal = %s\n", cfg.proposal.c_str());
  if (!cfg.theta_grid.empty())
    out += format_msg("theta_grid = %s\n", detail::join_doubles(cfg.theta_grid).c_str());
  out += format_msg("schedules = %s\n", detail::join_strings(cfg.schedules).c_str());
  out += format_msg("resample = %s\n", cfg.resample.c_str());
  out += format_msg("ess_fraction = %.17g\n", cfg.ess_fraction);
  out += format_msg("gamma_small = %lld\n", static_cast<long long>(cfg.gamma_small));
  out += format_msg("gamma_big = %lld\n", static_cast<long long>(cfg.gamma_big));
  out += format_msg("chi = %.17g\n", cfg.chi);
  out += format_msg("replicates = %lld\n", static_cast<long long>(cfg.replicates));
  out += format_msg("mutation_cap = %lld\n", static_cast<long long>(cfg.mutation_cap));
  out += format_msg("se_repetitions = %lld\n", static_cast<long long>(cfg.se_repetitions));
  if (!cfg.n_list.empty())
    out += format_msg("n_list = %s\n", detail::join_ints(cfg.n_list).c_str());
  out += format_msg("horizon_t = %.17g\n", cfg.horizon_t);
  out += format_msg("theta0 = %.17g\n", cfg.theta0);
  out += format_msg("master_seed = %llu\n", static_cast<unsigned long long>(cfg.master_seed));
  out += format_msg("workers = %d\n", cfg.workers);
  out += format_msg("timing = %s\n", cfg.timing ? "on" : "off");
  return out;
}

// Deterministic sub-seed for (grid point, schedule, repetition) triples.
inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b, uint64_t c) {
  return mix64(mix64(mix64(master + 0x9e3779b97f4a7c15ULL * (a + 1)) +
                     0xd1b54a32d192ed03ULL * (b + 1)) +
               0x94d049bb133111ebULL * (c + 1));
}

inline double relative_se_of_logs(const std::vector<double>& logs, double log_mean) {
  if (log_mean == kLogZero || logs.size() < 2) return 0.0;
  std::vector<double> norm(logs);
  for (double& v : norm) v -= log_mean;
  return std::sqrt(variance_of_exp(norm) / static_cast<double>(norm.size()));
}

// --- loaded data ---------------------------------------------------------------

inline IsmState read_ism_stream_path(const std::string& path) {
  check(!path.empty(), "no sample file given (--sample)");
  return parse_ism(read_text_file(path), path);
}

struct FaData {
  FaSample sample;
  bool site_model = false;
  int sites = 0;
  Matrix P;  // dense models only
};

inline FaData load_fa_data(const ExperimentConfig& cfg) {
  check(!cfg.sample_path.empty(), "no sample file given (--sample)");
  FaData data;
  data.sample = read_fa_sample(cfg.sample_path);
  if (cfg.model == "fa-site") {
    data.site_model = true;
    data.sites = data.sample.sites();
  } else if (cfg.model == "fa-dense") {
    check(!cfg.pmatrix_path.empty(), "dense finite-alleles model needs a matrix file (--pmatrix)");
    data.P = read_matrix(cfg.pmatrix_path);
    check(data.P.rows() == data.sample.d,
          format_msg("sample type-space size %lld does not match the %d x %d matrix",
                     static_cast<long long>(data.sample.d), data.P.rows(), data.P.cols()));
  } else {
    raise(format_msg("model '%s' is not a finite-alleles model", cfg.model.c_str()));
  }
  return data;
}

// theta_param follows the conventions in the header comment (per-site for
// site models, total otherwise).
inline MutationModel make_fa_model(const FaData& data, double theta_param) {
  if (data.site_model) return MutationModel::site_flip(theta_param * data.sites, data.sites);
  return MutationModel::dense(theta_param, data.P);
}

// Default replicate budgets (gamma, Gamma): finite alleles 100 / 10^4; ISM
// 10^3 / 10^5 for samples up to 100 lineages, 2x10^3 / 2x10^5 beyond.
inline void resolve_budgets(ExperimentConfig& cfg, int64_t n) {
  const bool ism = cfg.model == "ism";
  const bool big = ism && n > 100;
  if (cfg.gamma_small == 0) cfg.gamma_small = ism ? (big ? 2000 : 1000) : 100;
  if (cfg.gamma_big == 0) cfg.gamma_big = ism ? (big ? 200000 : 100000) : 10000;
  check(cfg.gamma_small >= 1 && cfg.gamma_big >= cfg.gamma_small,
        "need 1 <= gamma_small <= gamma_big");
}

// --- surface -----------------------------------------------------------------

namespace detail {

struct PointSummary {
  double log_estimate = kLogZero;
  double rel_se = 0.0;
  double wall_ms = 0.0;
  int64_t draws = 0;
  int64_t repetitions = 1;
  int64_t discarded = 0;
};

// One (theta, schedule) grid point: independent-replicate schedules report
// the in-run standard error from a single run; dependent runs (boosted
// schedule or resampling active) repeat the experiment B times.
template <class Proposal>
PointSummary surface_point(const Proposal& proposal, const typename Proposal::State& start,
                           const ExperimentConfig& cfg, const SchedulePlan& plan,
                           int64_t mutation_cap, size_t ti, size_t si) {
  SisEngine<Proposal> engine(proposal);
  ResamplePolicy policy = ResamplePolicy::none();
  if (plan.boost_level > 0)
    policy = ResamplePolicy::at_level(plan.boost_level, plan.boost_target);
  else if (cfg.resample == "ess")
    policy = ResamplePolicy::ess(cfg.ess_fraction);
  const bool dependent = plan.boost_level > 0 || cfg.resample == "ess";
  const int64_t reps = dependent ? std::max<int64_t>(2, cfg.se_repetitions) : 1;

  PointSummary out;
  out.repetitions = reps;
  std::vector<double> logs;
  double single_rel_se = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int64_t b = 0; b < reps; ++b) {
    EngineOptions opt;
    opt.replicates = plan.initial_replicates;
    opt.seed = derive_seed(cfg.master_seed, ti, si, static_cast<uint64_t>(b));
    opt.workers = cfg.workers;
    opt.resample = policy;
    opt.max_mutations = mutation_cap;
    RunResult r = engine.run(start, opt);
    logs.push_back(r.log_estimate);
    single_rel_se = r.rel_se;
    if (b == 0) out.draws = r.coalescence_draws;
    out.discarded += r.discarded;
  }
  const auto t1 = std::chrono::steady_clock::now();
  out.log_estimate = log_mean_exp(logs);
  out.rel_se = dependent ? relative_se_of_logs(logs, out.log_estimate) : single_rel_se;
  if (cfg.timing)
    out.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return out;
}

inline void append_surface_row(CsvTable& table, double theta, const std::string& schedule,
                               const PointSummary& p) {
  const double estimate = std::exp(p.log_estimate);
  table.rows.push_back({csv_cell(theta), schedule, csv_cell(p.log_estimate),
                        csv_cell(estimate), csv_cell(p.rel_se), csv_cell(p.rel_se * estimate),
                        csv_cell(p.wall_ms), csv_cell(p.draws), csv_cell(p.repetitions),
                        csv_cell(p.discarded)});
}

inline CsvTable surface_table_header() {
  CsvTable t;
  t.header = {"theta",  "schedule", "log_estimate", "estimate",    "rel_se",
              "se",     "wall_ms",  "draws",        "repetitions", "discarded"};
  return t;
}

inline void validate_surface_grid(const ExperimentConfig& cfg) {
  check(!cfg.theta_grid.empty(), "surface: theta grid is empty");
  for (size_t i = 0; i < cfg.theta_grid.size(); ++i) {
    check(cfg.theta_grid[i] > 0.0, "surface: theta grid values must be positive");
    if (i) check(cfg.theta_grid[i] > cfg.theta_grid[i - 1],
                 "surface: theta grid must be strictly increasing");
  }
  check(!cfg.schedules.empty(), "surface: no schedules selected");
  check(cfg.resample == "none" || cfg.resample == "ess",
        format_msg("surface: unknown resampling policy '%s' (none | ess)",
                   cfg.resample.c_str()));
}

}  // namespace detail

inline CsvTable run_surface(ExperimentConfig cfg) {
  detail::validate_surface_grid(cfg);
  CsvTable table = detail::surface_table_header();

  if (cfg.model == "ism") {
    IsmState start = read_ism_stream_path(cfg.sample_path);
    resolve_budgets(cfg, start.size());
    std::optional<HuwTable> huw;
    if (cfg.proposal == "huw") {
      check(!cfg.huw_table_path.empty(),
            "the precomputed-table proposal needs --huw-table (build it with the "
            "huwtable command)");
      std::ifstream in(cfg.huw_table_path, std::ios::binary);
      check(static_cast<bool>(in),
            format_msg("cannot open proposal table '%s'", cfg.huw_table_path.c_str()));
      huw.emplace(HuwTable::load(in, cfg.huw_table_path));
      check(huw->s_max() >= start.size(),
            format_msg("proposal table covers s <= %lld but the sample has %lld lineages; "
                       "re-run the precompute step with a larger s_max",
                       static_cast<long long>(huw->s_max()),
                       static_cast<long long>(start.size())));
    }
    for (size_t ti = 0; ti < cfg.theta_grid.size(); ++ti) {
      const double theta = cfg.theta_grid[ti];
      for (size_t si = 0; si < cfg.schedules.size(); ++si) {
        SchedulePlan plan = make_schedule(parse_schedule(cfg.schedules[si]), start.size(),
                                          cfg.gamma_small, cfg.gamma_big, theta, cfg.chi);
        detail::PointSummary p;
        if (cfg.proposal == "huw") {
          IsmHuwProposal proposal(&*huw, theta);
          p = detail::surface_point(proposal, start, cfg, plan, 0, ti, si);
        } else if (cfg.proposal == "gt" || cfg.proposal == "sd") {
          IsmProposal proposal(cfg.proposal == "gt" ? IsmProposalKind::GT : IsmProposalKind::SD,
                               theta);
          p = detail::surface_point(proposal, start, cfg, plan, 0, ti, si);
        } else {
          raise(format_msg("unknown infinite-sites proposal '%s' (gt | sd | huw)",
                           cfg.proposal.c_str()));
        }
        detail::append_surface_row(table, theta, cfg.schedules[si], p);
      }
    }
    return table;
  }

  FaData data = load_fa_data(cfg);
  resolve_budgets(cfg, data.sample.counts.size());
  const ProposalKind kind = parse_proposal(cfg.proposal);
  for (size_t ti = 0; ti < cfg.theta_grid.size(); ++ti) {
    const double theta = cfg.theta_grid[ti];
    MutationModel model = make_fa_model(data, theta);
    FaProposal proposal(model, kind);
    for (size_t si = 0; si < cfg.schedules.size(); ++si) {
      SchedulePlan plan =
          make_schedule(parse_schedule(cfg.schedules[si]), data.sample.counts.size(),
                        cfg.gamma_small, cfg.gamma_big, theta, cfg.chi);
      const int64_t cap = kind == ProposalKind::GT ? cfg.mutation_cap : 0;
      detail::PointSummary p =
          detail::surface_point(proposal, data.sample.counts, cfg, plan, cap, ti, si);
      detail::append_surface_row(table, theta, cfg.schedules[si], p);
    }
  }
  return table;
}

// --- variance curve ------------------------------------------------------------

namespace detail {

inline CsvTable levels_to_rows(const RunResult& result) {
  CsvTable table;
  table.header = {"level",      "rel_variance", "log10_rel_variance", "log10_variance",
                  "degenerate", "ess",          "alive"};
  for (const LevelStats& s : result.levels) {
    const bool zero = s.rel_variance <= 0.0 || s.log_mean == kLogZero;
    // Raw variance of the stopped weights: Var(w) = rel_variance * mean(w)^2.
    // The relative column is scale-free but its estimate is capped near the
    // replicate count once a single weight dominates; the raw column keeps
    // growing with the discovered tail, so it is the one to compare across
    // proposals.
    const double log10_var =
        zero ? 0.0 : std::log10(s.rel_variance) + 2.0 * s.log_mean / std::log(10.0);
    table.rows.push_back({csv_cell(s.level), csv_cell(s.rel_variance),
                          zero ? "-inf" : csv_cell(std::log10(s.rel_variance)),
                          zero ? "-inf" : csv_cell(log10_var),
                          csv_cell(static_cast<int64_t>(zero ? 1 : 0)), csv_cell(s.ess),
                          csv_cell(s.alive)});
  }
  return table;
}

template <class Proposal>
CsvTable varcurve_with(const Proposal& proposal, const typename Proposal::State& start,
                       const ExperimentConfig& cfg, int64_t mutation_cap) {
  SisEngine<Proposal> engine(proposal);
  EngineOptions opt;
  opt.replicates = cfg.replicates;
  opt.seed = cfg.master_seed;
  opt.workers = cfg.workers;
  opt.max_mutations = mutation_cap;
  opt.record_levels = true;
  return levels_to_rows(engine.run(start, opt));
}

}  // namespace detail

// Per-level variance of normalized weights, replicates advanced in lockstep
// between lineage levels, no resampling.  Level ||n|| is the start (variance
// zero); level 1 includes the terminal factor.
inline CsvTable run_varcurve(ExperimentConfig cfg) {
  if (cfg.model == "ism") {
    IsmState start = read_ism_stream_path(cfg.sample_path);
    resolve_budgets(cfg, start.size());
    if (cfg.replicates == 0) cfg.replicates = cfg.gamma_big;
    const double theta =
        cfg.theta0 > 0.0
            ? cfg.theta0
            : watterson_theta(start.column_count(), start.size());
    if (cfg.proposal == "huw") {
      check(!cfg.huw_table_path.empty(),
            "the precomputed-table proposal needs --huw-table (build it with the "
            "huwtable command)");
      std::ifstream in(cfg.huw_table_path, std::ios::binary);
      check(static_cast<bool>(in),
            format_msg("cannot open proposal table '%s'", cfg.huw_table_path.c_str()));
      HuwTable table = HuwTable::load(in, cfg.huw_table_path);
      IsmHuwProposal proposal(&table, theta);
      return detail::varcurve_with(proposal, start, cfg, 0);
    }
    if (cfg.proposal == "gt" || cfg.proposal == "sd") {
      IsmProposal proposal(cfg.proposal == "gt" ? IsmProposalKind::GT : IsmProposalKind::SD,
                           theta);
      return detail::varcurve_with(proposal, start, cfg, 0);
    }
    raise(format_msg("unknown infinite-sites proposal '%s' (gt | sd | huw)",
                     cfg.proposal.c_str()));
  }

  FaData data = load_fa_data(cfg);
  resolve_budgets(cfg, data.sample.counts.size());
  if (cfg.replicates == 0) cfg.replicates = cfg.gamma_big;
  const double theta = cfg.theta0 > 0.0 ? cfg.theta0 : data.sample.theta;
  MutationModel model = make_fa_model(data, theta);
  const ProposalKind kind = parse_proposal(cfg.proposal);
  FaProposal proposal(model, kind);
  const int64_t cap = kind == ProposalKind::GT ? cfg.mutation_cap : 0;
  return detail::varcurve_with(proposal, data.sample.counts, cfg, cap);
}

// --- cost convergence ------------------------------------------------------------

// Balanced synthetic start configuration: n lineages spread as evenly as
// possible over the d types (the scaled state tends to the uniform y0).
inline TypeCounts balanced_counts(int64_t n, int d) {
  check(d >= 1 && n >= d, "balanced_counts: need n >= d >= 1");
  std::vector<int> counts(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i)
    counts[static_cast<size_t>(i)] =
        static_cast<int>(n / d + (i < static_cast<int>(n % d) ? 1 : 0));
  return TypeCounts::from_dense(counts);
}

// Truncated-run mean cost against the predicted large-n limit (1-t)^(d-1)
// for each n in the sweep list.  Dense finite-alleles models only: the limit
// theory is for a fixed small type space.
inline CsvTable run_costconv(ExperimentConfig cfg) {
  check(cfg.model == "fa-dense",
        "costconv sweeps a dense finite-alleles model (--model fa-dense)");
  check(!cfg.n_list.empty(), "costconv: empty n list");
  for (size_t i = 0; i + 1 < cfg.n_list.size(); ++i)
    check(cfg.n_list[i] < cfg.n_list[i + 1], "costconv: n list must be strictly increasing");
  check(cfg.horizon_t >= 0.0 && cfg.horizon_t < 1.0, "costconv: t must lie in [0, 1)");
  check(cfg.theta0 > 0.0, "costconv: need --theta0 > 0");
  check(!cfg.pmatrix_path.empty(), "costconv: need --pmatrix");
  if (cfg.replicates == 0) cfg.replicates = 10000;

  Matrix P = read_matrix(cfg.pmatrix_path);
  MutationModel model = MutationModel::dense(cfg.theta0, P);
  const int d = static_cast<int>(model.type_count());
  const double predicted = std::pow(1.0 - cfg.horizon_t, d - 1.0);
  FaProposal proposal(model, parse_proposal(cfg.proposal));
  SisEngine<FaProposal> engine(proposal);

  CsvTable table;
  table.header = {"n", "t", "mean_cost", "se", "predicted", "included", "absorbed_early"};
  for (size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
    const int64_t n = cfg.n_list[ni];
    check(n >= d, format_msg("costconv: n = %lld smaller than the type space d = %d",
                             static_cast<long long>(n), d));
    if (cfg.horizon_t == 0.0) {
      // Zero steps: the cost product is empty, exactly 1 on every replicate.
      table.rows.push_back({csv_cell(n), csv_cell(0.0), csv_cell(1.0), csv_cell(0.0),
                            csv_cell(1.0), csv_cell(cfg.replicates), csv_cell(int64_t{0})});
      continue;
    }
    EngineOptions opt;
    opt.replicates = cfg.replicates;
    opt.seed = derive_seed(cfg.master_seed, ni, 0, 0);
    opt.workers = cfg.workers;
    opt.max_mutations = parse_proposal(cfg.proposal) == ProposalKind::GT ? cfg.mutation_cap : 0;
    TruncatedResult r = engine.truncated_run(balanced_counts(n, d), cfg.horizon_t, opt);
    const double mean = std::exp(r.log_mean_cost);
    table.rows.push_back({csv_cell(n), csv_cell(cfg.horizon_t), csv_cell(mean),
                          csv_cell(r.rel_se * mean), csv_cell(predicted), csv_cell(r.included),
                          csv_cell(r.absorbed_early)});
  }
  return table;
}

// --- data synthesis --------------------------------------------------------------

struct MakeDataSpec {
  std::string model;            // fa-site | ism
  int64_t n = 0;                // sample size (ignored when nested is set)
  int sites = 20;               // fa-site
  double theta = 0.5;           // per-site (fa-site) or total (ism)
  std::vector<int64_t> nested;  // fa-site: sizes sharing one forward run
  int64_t target_segregating = 0;  // ism: scan seeds until r matches
  uint64_t seed = 1;
  std::string out;  // output path; nested sizes insert "_n<size>" before the extension
};

struct MakeDataResult {
  std::vector<std::string> files;
  uint64_t seed_used = 0;
  int64_t segregating = -1;  // ism only
};

namespace detail {
inline std::string suffixed_path(const std::string& path, int64_t n) {
  const size_t dot = path.find_last_of('.');
  const size_t slash = path.find_last_of('/');
  const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
  if (has_ext)
    return path.substr(0, dot) + format_msg("_n%lld", static_cast<long long>(n)) +
           path.substr(dot);
  return path + format_msg("_n%lld", static_cast<long long>(n));
}
}  // namespace detail

inline MakeDataResult run_make_data(const MakeDataSpec& spec) {
  check(!spec.out.empty(), "makedata: no output path");
  MakeDataResult result;
  result.seed_used = spec.seed;

  if (spec.model == "fa-site") {
    check(spec.theta > 0.0, "makedata: theta must be positive");
    MutationModel model = MutationModel::site_flip(spec.theta * spec.sites, spec.sites);
    RngStream rng(spec.seed, 0, 0);
    std::vector<int64_t> sizes = spec.nested;
    if (sizes.empty()) {
      check(spec.n >= 1, "makedata: need --n >= 1");
      sizes.push_back(spec.n);
    }
    for (size_t i = 0; i + 1 < sizes.size(); ++i)
      check(sizes[i] < sizes[i + 1], "makedata: nested sizes must be strictly increasing");
    // One forward run to the largest size; smaller nested samples are uniform
    // subsamples of its lineages (so they are contained in the larger sample).
    TypeCounts big = forward_simulate(model, rng, {sizes.back()}).front();
    for (size_t i = 0; i < sizes.size(); ++i) {
      TypeCounts counts =
          sizes[i] == sizes.back() ? big : subsample_counts(big, sizes[i], rng);
      FaSample sample{int64_t{1} << spec.sites, spec.theta, counts};
      const std::string path =
          sizes.size() == 1 ? spec.out : detail::suffixed_path(spec.out, sizes[i]);
      write_fa_sample(path, sample);
      result.files.push_back(path);
    }
    return result;
  }

  if (spec.model == "ism") {
    check(spec.n >= 2, "makedata: infinite-sites samples need --n >= 2");
    check(spec.theta > 0.0, "makedata: theta must be positive");
    const int64_t max_tries = 100000;
    for (int64_t k = 0; k < max_tries; ++k) {
      const uint64_t seed = spec.seed + static_cast<uint64_t>(k);
      RngStream rng(seed, 0, 0);
      IsmState st = ism_simulate(spec.n, spec.theta, rng);
      if (spec.target_segregating > 0 && st.column_count() != spec.target_segregating)
        continue;
      write_text_file(spec.out, format_ism(st));
      result.files.push_back(spec.out);
      result.seed_used = seed;
      result.segregating = st.column_count();
      return result;
    }
    raise(format_msg("makedata: no seed in [%llu, %llu) yields %lld segregating sites",
                     static_cast<unsigned long long>(spec.seed),
                     static_cast<unsigned long long>(spec.seed + max_tries),
                     static_cast<long long>(spec.target_segregating)));
  }

  raise(format_msg("makedata: unknown model '%s' (fa-site | ism)", spec.model.c_str()));
}

// --- proposal-table precompute ----------------------------------------------------

struct HuwTableSpec {
  std::string path;
  int64_t s_max = 0;
  double theta = 0.0;
  bool force = false;  // rebuild even when a matching file exists
};

// Builds (or reuses) the precomputed proposal-weight table.  Returns a short
// human-readable summary line.
inline std::string run_huwtable(const HuwTableSpec& spec) {
  check(!spec.path.empty(), "huwtable: no table path");
  check(spec.s_max >= 2, "huwtable: need s_max >= 2");
  check(spec.theta > 0.0, "huwtable: theta must be positive");
  if (!spec.force && std::filesystem::exists(spec.path)) {
    std::ifstream in(spec.path, std::ios::binary);
    check(static_cast<bool>(in), format_msg("cannot open '%s'", spec.path.c_str()));
    HuwTable existing = HuwTable::load(in, spec.path);
    check(existing.s_max() == spec.s_max && existing.theta() == spec.theta,
          format_msg("existing table '%s' has s_max=%lld theta=%.17g (requested "
                     "s_max=%lld theta=%.17g); pass --force to rebuild",
                     spec.path.c_str(), static_cast<long long>(existing.s_max()),
                     existing.theta(), static_cast<long long>(spec.s_max), spec.theta));
    return format_msg("reused existing table %s (s_max=%lld, theta=%.17g)",
                      spec.path.c_str(), static_cast<long long>(spec.s_max), spec.theta);
  }
  HuwTable table(spec.s_max, spec.theta);
  std::ofstream out(spec.path, std::ios::binary);
  check(static_cast<bool>(out), format_msg("cannot open '%s' for writing", spec.path.c_str()));
  table.save(out);
  out.flush();
  check(static_cast<bool>(out), format_msg("I/O error while writing '%s'", spec.path.c_str()));
  return format_msg("built table %s (s_max=%lld, theta=%.17g)", spec.path.c_str(),
                    static_cast<long long>(spec.s_max), spec.theta);
}

// --- misc ------------------------------------------------------------------------

inline void ensure_directory(const std::string& dir) {
  check(!dir.empty(), "empty output directory");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  check(!ec, format_msg("cannot create output directory '%s': %s", dir.c_str(),
                        ec.message().c_str()));
}

inline std::string path_join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace coalsis

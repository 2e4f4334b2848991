// ============================================================================
//  coalsis — command-line front end.
//
//  Subcommands:
//    surface   likelihood estimates over a mutation-rate grid, per schedule
//    varcurve  importance-weight variance by remaining-lineage count
//    costconv  truncated-run mean cost vs sample size against the n->inf limit
//    makedata  synthesize benchmark sample files (documented seeds)
//    huwtable  precompute the table-driven infinite-sites proposal
//
//  Each experiment writes NAME.csv, NAME.config.txt (the effective settings,
//  reloadable via --config), and NAME.svg into --out.  Flag precedence:
//  built-in default < --config file < explicit flag.
// ============================================================================
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "coalsis/csv.hpp"
#include "coalsis/experiments.hpp"
#include "coalsis/svg.hpp"

namespace {

using coalsis::CsvTable;
using coalsis::ExperimentConfig;
using coalsis::SvgLinePlot;

// Flags parse into `cli`.  resolve() snapshots those values, reloads `cli`
// from the config file (if any), then re-applies only the explicitly-given
// flags on top — yielding default < file < flag precedence.
struct ExperimentArgs {
  std::string config_path;
  std::string out_dir = "results";
  std::string name;
  ExperimentConfig cli;     // parse target, becomes the effective config
  ExperimentConfig parsed;  // snapshot of command-line values (set in resolve)
  std::vector<std::pair<CLI::Option*, std::function<void()>>> overrides;

  void on_explicit(CLI::Option* opt, std::function<void()> apply) {
    overrides.emplace_back(opt, std::move(apply));
  }

  ExperimentConfig resolve() {
    parsed = cli;
    if (!config_path.empty())
      cli = coalsis::parse_experiment_config(coalsis::read_text_file(config_path),
                                             config_path);
    for (const auto& [opt, apply] : overrides)
      if (opt->count() > 0) apply();
    return cli;
  }
};

void add_common_flags(CLI::App* cmd, ExperimentArgs& args) {
  cmd->add_option("--config", args.config_path,
                  "experiment config file (explicit flags override its keys)");
  cmd->add_option("--out", args.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--name", args.name, "basename for output files (default: subcommand)");

  auto& a = args;
  a.on_explicit(cmd->add_option("--model", a.cli.model,
                                "fa-site (per-site rates, 2^sites types) | fa-dense | ism")
                    ->check(CLI::IsMember({"fa-site", "fa-dense", "ism"}))
                    ->capture_default_str(),
                [&a] { a.cli.model = a.parsed.model; });
  a.on_explicit(cmd->add_option("--sample", a.cli.sample_path, "sample file"),
                [&a] { a.cli.sample_path = a.parsed.sample_path; });
  a.on_explicit(cmd->add_option("--pmatrix", a.cli.pmatrix_path,
                                "mutation transition matrix file (fa-dense)"),
                [&a] { a.cli.pmatrix_path = a.parsed.pmatrix_path; });
  a.on_explicit(cmd->add_option("--huw-table", a.cli.huw_table_path,
                                "precomputed proposal table (ism, --proposal huw)"),
                [&a] { a.cli.huw_table_path = a.parsed.huw_table_path; });
  a.on_explicit(cmd->add_option("--proposal", a.cli.proposal,
                                "fa: gt | sd | optimal;  ism: gt | sd | huw")
                    ->capture_default_str(),
                [&a] { a.cli.proposal = a.parsed.proposal; });
  a.on_explicit(cmd->add_option("--mutation-cap", a.cli.mutation_cap,
                                "discard replicates exceeding this many mutation moves "
                                "(gt only; 0 = unlimited)")
                    ->capture_default_str(),
                [&a] { a.cli.mutation_cap = a.parsed.mutation_cap; });
  a.on_explicit(cmd->add_option("--seed", a.cli.master_seed, "master seed")
                    ->capture_default_str(),
                [&a] { a.cli.master_seed = a.parsed.master_seed; });
  a.on_explicit(cmd->add_option("--workers", a.cli.workers, "worker threads")
                    ->check(CLI::Range(1, 1024))
                    ->capture_default_str(),
                [&a] { a.cli.workers = a.parsed.workers; });
  a.on_explicit(cmd->add_flag("--no-timing",
                              "zero the wall_ms column for byte-reproducible output"),
                [&a] { a.cli.timing = false; });
}

void write_outputs(const std::string& dir, const std::string& name, const CsvTable& table,
                   const ExperimentConfig& cfg, const SvgLinePlot& plot) {
  coalsis::ensure_directory(dir);
  const std::string csv_path = coalsis::path_join(dir, name + ".csv");
  coalsis::write_text_file(csv_path, table.to_string());
  coalsis::write_text_file(coalsis::path_join(dir, name + ".config.txt"),
                           coalsis::format_experiment_config(cfg));
  const std::string svg_path = coalsis::path_join(dir, name + ".svg");
  coalsis::write_text_file(svg_path, plot.render());
  std::printf("wrote %s (%zu rows)\n", csv_path.c_str(), table.rows.size());
  std::printf("wrote %s\n", svg_path.c_str());
}

std::vector<double> column_values(const CsvTable& t, const std::string& name) {
  std::vector<double> out;
  for (size_t r = 0; r < t.rows.size(); ++r) out.push_back(t.number(r, name));
  return out;
}

SvgLinePlot surface_plot(const CsvTable& t, const ExperimentConfig& cfg) {
  SvgLinePlot plot("Estimated log-likelihood by mutation rate", "theta", "log estimate");
  for (const std::string& sched : cfg.schedules) {
    std::vector<double> xs, ys;
    for (size_t r = 0; r < t.rows.size(); ++r) {
      if (t.cell(r, "schedule") != sched) continue;
      xs.push_back(t.number(r, "theta"));
      ys.push_back(t.number(r, "log_estimate"));
    }
    plot.add_series(sched, xs, ys);
  }
  return plot;
}

SvgLinePlot varcurve_plot(const CsvTable& t) {
  SvgLinePlot plot("Importance-weight variance by remaining lineages",
                   "lineages remaining", "log10 relative variance");
  // "-inf" cells parse to -infinity and render as gaps.
  plot.add_series("variance", column_values(t, "level"),
                  column_values(t, "log10_rel_variance"));
  return plot;
}

SvgLinePlot costconv_plot(const CsvTable& t) {
  SvgLinePlot plot("Truncated-run mean cost vs sample size", "sample size n", "mean cost");
  plot.add_series("measured", column_values(t, "n"), column_values(t, "mean_cost"));
  plot.add_series("predicted", column_values(t, "n"), column_values(t, "predicted"));
  return plot;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential importance sampling for coalescent sampling probabilities"};
  app.require_subcommand(1);

  // ---- surface ----
  ExperimentArgs surface;
  CLI::App* cmd_surface =
      app.add_subcommand("surface", "likelihood estimates over a mutation-rate grid");
  add_common_flags(cmd_surface, surface);
  {
    auto& a = surface;
    a.on_explicit(cmd_surface
                      ->add_option("--theta-grid", a.cli.theta_grid,
                                   "comma-separated rates (per-site for fa-site, total "
                                   "otherwise)")
                      ->delimiter(','),
                  [&a] { a.cli.theta_grid = a.parsed.theta_grid; });
    a.on_explicit(cmd_surface
                      ->add_option("--schedules", a.cli.schedules,
                                   "comma-separated subset of full,boosted,small,uniform")
                      ->delimiter(','),
                  [&a] { a.cli.schedules = a.parsed.schedules; });
    a.on_explicit(cmd_surface->add_option("--resample", a.cli.resample, "none | ess")
                      ->check(CLI::IsMember({"none", "ess"}))
                      ->capture_default_str(),
                  [&a] { a.cli.resample = a.parsed.resample; });
    a.on_explicit(cmd_surface
                      ->add_option("--ess-fraction", a.cli.ess_fraction,
                                   "resample when ESS drops below this fraction of "
                                   "replicates")
                      ->capture_default_str(),
                  [&a] { a.cli.ess_fraction = a.parsed.ess_fraction; });
    a.on_explicit(cmd_surface
                      ->add_option("--gamma-small", a.cli.gamma_small,
                                   "small replicate budget (0 = 100 fa, 10^3 ism n<=100, "
                                   "2x10^3 beyond)")
                      ->capture_default_str(),
                  [&a] { a.cli.gamma_small = a.parsed.gamma_small; });
    a.on_explicit(cmd_surface
                      ->add_option("--gamma-big", a.cli.gamma_big,
                                   "large replicate budget (0 = 10^4 fa, 10^5 ism n<=100, "
                                   "2x10^5 beyond)")
                      ->capture_default_str(),
                  [&a] { a.cli.gamma_big = a.parsed.gamma_big; });
    a.on_explicit(cmd_surface
                      ->add_option("--chi", a.cli.chi,
                                   "switch-point parameter for the boosted schedule")
                      ->capture_default_str(),
                  [&a] { a.cli.chi = a.parsed.chi; });
    a.on_explicit(cmd_surface
                      ->add_option("--se-repetitions", a.cli.se_repetitions,
                                   "independent repetitions used for standard errors of "
                                   "dependent (boosted/resampled) runs")
                      ->capture_default_str(),
                  [&a] { a.cli.se_repetitions = a.parsed.se_repetitions; });
  }

  // ---- varcurve ----
  ExperimentArgs varcurve;
  CLI::App* cmd_varcurve = app.add_subcommand(
      "varcurve", "importance-weight variance by remaining-lineage count");
  add_common_flags(cmd_varcurve, varcurve);
  {
    auto& a = varcurve;
    a.on_explicit(cmd_varcurve
                      ->add_option("--replicates", a.cli.replicates,
                                   "replicate count (0 = the model's large budget)")
                      ->capture_default_str(),
                  [&a] { a.cli.replicates = a.parsed.replicates; });
    a.on_explicit(cmd_varcurve
                      ->add_option("--theta0", a.cli.theta0,
                                   "driving rate (0 = sample-file rate for fa, Watterson "
                                   "estimate for ism)")
                      ->capture_default_str(),
                  [&a] { a.cli.theta0 = a.parsed.theta0; });
  }

  // ---- costconv ----
  ExperimentArgs costconv;
  costconv.cli.model = "fa-dense";
  CLI::App* cmd_costconv = app.add_subcommand(
      "costconv", "truncated-run mean cost vs sample size against the large-n limit");
  add_common_flags(cmd_costconv, costconv);
  {
    auto& a = costconv;
    a.on_explicit(cmd_costconv
                      ->add_option("--n-list", a.cli.n_list,
                                   "comma-separated sample sizes, increasing")
                      ->delimiter(','),
                  [&a] { a.cli.n_list = a.parsed.n_list; });
    a.on_explicit(cmd_costconv->add_option("--t", a.cli.horizon_t, "truncation point in [0,1)")
                      ->capture_default_str(),
                  [&a] { a.cli.horizon_t = a.parsed.horizon_t; });
    a.on_explicit(cmd_costconv->add_option("--theta0", a.cli.theta0,
                                           "driving mutation rate (> 0)"),
                  [&a] { a.cli.theta0 = a.parsed.theta0; });
    a.on_explicit(cmd_costconv
                      ->add_option("--replicates", a.cli.replicates,
                                   "replicate count (0 = 10^4)")
                      ->capture_default_str(),
                  [&a] { a.cli.replicates = a.parsed.replicates; });
  }

  // ---- makedata ----
  coalsis::MakeDataSpec mk;
  CLI::App* cmd_makedata =
      app.add_subcommand("makedata", "synthesize benchmark sample files");
  cmd_makedata->add_option("--model", mk.model, "fa-site | ism")
      ->check(CLI::IsMember({"fa-site", "ism"}))
      ->required();
  cmd_makedata->add_option("--n", mk.n, "sample size");
  cmd_makedata->add_option("--sites", mk.sites, "site count (fa-site)")->capture_default_str();
  cmd_makedata
      ->add_option("--theta", mk.theta, "per-site rate (fa-site) or total rate (ism)")
      ->capture_default_str();
  cmd_makedata
      ->add_option("--nested", mk.nested,
                   "comma-separated increasing sizes drawn from one genealogy "
                   "(fa-site); writes one file per size")
      ->delimiter(',');
  cmd_makedata->add_option("--target-segregating", mk.target_segregating,
                           "scan seeds upward until the sample has exactly this many "
                           "segregating sites (ism)");
  cmd_makedata->add_option("--seed", mk.seed, "generation seed (start of scan for ism)")
      ->capture_default_str();
  cmd_makedata->add_option("--out", mk.out, "output file; nested sizes insert _n<size>")
      ->required();

  // ---- huwtable ----
  coalsis::HuwTableSpec ht;
  CLI::App* cmd_huwtable = app.add_subcommand(
      "huwtable", "precompute the table-driven infinite-sites proposal");
  cmd_huwtable->add_option("--out", ht.path, "table file")->required();
  cmd_huwtable->add_option("--s-max", ht.s_max, "largest supported lineage count")->required();
  cmd_huwtable->add_option("--theta", ht.theta, "driving mutation rate baked into the table")
      ->required();
  cmd_huwtable->add_flag("--force", ht.force, "rebuild even if a matching table exists");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_surface->parsed()) {
      ExperimentConfig cfg = surface.resolve();
      CsvTable table = coalsis::run_surface(cfg);
      const std::string name = surface.name.empty() ? "surface" : surface.name;
      write_outputs(surface.out_dir, name, table, cfg, surface_plot(table, cfg));
    } else if (cmd_varcurve->parsed()) {
      ExperimentConfig cfg = varcurve.resolve();
      CsvTable table = coalsis::run_varcurve(cfg);
      const std::string name = varcurve.name.empty() ? "varcurve" : varcurve.name;
      write_outputs(varcurve.out_dir, name, table, cfg, varcurve_plot(table));
    } else if (cmd_costconv->parsed()) {
      ExperimentConfig cfg = costconv.resolve();
      CsvTable table = coalsis::run_costconv(cfg);
      const std::string name = costconv.name.empty() ? "costconv" : costconv.name;
      write_outputs(costconv.out_dir, name, table, cfg, costconv_plot(table));
    } else if (cmd_makedata->parsed()) {
      coalsis::MakeDataResult r = coalsis::run_make_data(mk);
      for (const std::string& f : r.files) std::printf("wrote %s\n", f.c_str());
      if (r.segregating >= 0)
        std::printf("seed %llu gives %lld segregating sites\n",
                    static_cast<unsigned long long>(r.seed_used),
                    static_cast<long long>(r.segregating));
      else
        std::printf("seed %llu\n", static_cast<unsigned long long>(r.seed_used));
    } else if (cmd_huwtable->parsed()) {
      std::printf("%s\n", coalsis::run_huwtable(ht).c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

// panel-msfe: pooled versus individual forecast comparison for panels.
//
//   panel-msfe simulate --config run.yaml [--seed S] [--reps R] [--threads N] [--out file.csv]
//   panel-msfe analyze  --panel data.csv --predict next.csv [--sigma banded|ar1|hetero|hac|true]
//                       [--bandwidth B] [--alpha A] [--fixed-effects] [--strict-paper-ci]
//   panel-msfe table    --id T1 [--reps R] [--seed S] [--n N] [--t T]
//
// Errors print one line "error: <Code>: <message>" to stderr and exit with 2.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "panel_msfe.hpp"
#include "panel_msfe/config.hpp"

namespace pm = panel_msfe;

namespace {

constexpr int kErrorExit = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw pm::IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw pm::IoError("cannot write '" + path + "'");
  out << text;
}

unsigned thread_count(std::optional<unsigned> flag, unsigned config_value) {
  if (flag) return *flag;
  if (const char* env = std::getenv("PANEL_MSFE_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 0) throw pm::ValidationError("PANEL_MSFE_THREADS must be a count >= 0");
    return static_cast<unsigned>(v);
  }
  return config_value;
}

pm::TableFormat parse_format(const std::string& f) {
  if (f == "csv") return pm::TableFormat::kCsv;
  if (f == "text") return pm::TableFormat::kText;
  throw pm::ValidationError("format must be csv or text");
}

pm::SigmaSpec sigma_from_flag(const std::string& name, pm::Index bandwidth) {
  if (name == "banded") return pm::SigmaSpec::banded(bandwidth);
  if (name == "ar1") return pm::SigmaSpec::ar1();
  if (name == "hac") return pm::SigmaSpec::hac(bandwidth);
  if (name == "hetero")
    return pm::SigmaSpec::hetero(pm::ScaleFunction::abs_component(0),
                                 pm::SigmaSpec::banded(bandwidth > 0 ? bandwidth : 1));
  if (name == "true") return pm::SigmaSpec::true_sigma();
  throw pm::ValidationError("unknown --sigma '" + name + "'");
}

void emit_study(const pm::StudySummary& summary, const std::string& format, const std::string& out) {
  std::cout << pm::emit_table(summary, parse_format(format));
  if (!out.empty()) write_file(out, pm::emit_table(summary, pm::TableFormat::kCsv));
}

std::string analysis_csv(const pm::InferenceResult& r) {
  std::ostringstream os;
  os << std::setprecision(12);
  os << "N,T,e_hat,e1_hat,tau_sq,point,lo,hi,alpha,decision,estimator,bandwidth,b_prime,"
        "degenerate_variance\n";
  os << r.n << ',' << r.t_len << ',' << r.e_hat << ',' << r.e1_hat << ',' << r.tau_sq << ','
     << r.point << ',' << r.lo << ',' << r.hi << ',' << r.alpha << ',' << pm::to_string(r.decision())
     << ',' << r.variant_used << ',' << r.bandwidth << ',' << r.b_prime << ','
     << (r.degenerate_variance ? 1 : 0) << '\n';
  return os.str();
}

void print_analysis(const pm::InferenceResult& r) {
  std::cout << std::setprecision(6);
  std::cout << "panel: N=" << r.n << " T=" << r.t_len << '\n';
  std::cout << "E_hat = " << r.e_hat << "  E1_hat = " << r.e1_hat << "  tau_hat^2 = " << r.tau_sq
            << '\n';
  std::cout << "estimate of E_pool - E_ind: " << r.point << '\n';
  std::cout << (1.0 - r.alpha) * 100.0 << "% interval: [" << r.lo << ", " << r.hi << "]\n";
  std::cout << "decision: " << pm::to_string(r.decision()) << '\n';
  std::cout << "estimator: " << r.variant_used << "  b=" << r.bandwidth << "  b'=" << r.b_prime
            << '\n';
  if (r.degenerate_variance)
    std::cout << "note: variance estimate was not positive and has been floored\n";
}

int run_analysis(const pm::AnalyzeOptions& a, const std::string& out) {
  pm::Panel panel = pm::load_panel(a.panel_path, a.predict_path, a.columns);
  if (a.fixed_effects) panel = pm::within_demean(panel);
  pm::InferenceOptions opts;
  opts.alpha = a.alpha;
  opts.strict_paper_ci = a.strict_paper_ci;
  const pm::InferenceResult r = pm::run_inference(panel, a.sigma, a.kernel, opts);
  print_analysis(r);
  if (!out.empty()) write_file(out, analysis_csv(r));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pooled versus individual OLS forecast comparison for panels"};
  app.require_subcommand(1);

  std::optional<unsigned> threads;
  std::string out;
  std::string format = "csv";

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run a coverage study from a config file");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<pm::Index> reps;
  sim->add_option("--config", config_path, "YAML run configuration")->required();
  sim->add_option("--seed", seed, "Override the scenario seed");
  sim->add_option("--reps", reps, "Override the replication count");
  sim->add_option("--threads", threads, "Worker threads (0 = auto)");
  sim->add_option("--out", out, "Write the CSV summary here");
  sim->add_option("--format", format, "stdout format: csv or text");

  // analyze
  auto* ana = app.add_subcommand("analyze", "Interval for E_pool - E_ind on a CSV panel");
  pm::AnalyzeOptions a;
  std::string sigma_name = "banded";
  pm::Index bandwidth = 0;
  std::string analyze_config;
  ana->add_option("--panel", a.panel_path, "Long-format panel CSV (id,t,y,x1..xK)");
  ana->add_option("--predict", a.predict_path, "Prediction regressors CSV (id,x1..xK)");
  ana->add_option("--config", analyze_config, "YAML config with an analyze section");
  ana->add_option("--sigma", sigma_name, "banded | ar1 | hetero | hac | true");
  ana->add_option("--bandwidth", bandwidth, "Temporal bandwidth b (default round(T^(2/7)))");
  ana->add_option("--b-prime", a.kernel.b_prime, "Cross-sectional bandwidth b'");
  ana->add_option("--alpha", a.alpha, "Nominal non-coverage");
  ana->add_flag("--fixed-effects", a.fixed_effects, "Demean within individuals first");
  ana->add_flag("--strict-paper-ci", a.strict_paper_ci,
                "Use endpoints Phi^-1(alpha), Phi^-1(1-alpha)");
  ana->add_option("--out", out, "Write a one-row CSV result here");

  // table
  auto* tab = app.add_subcommand("table", "Reproduce a registered coverage table");
  std::string table_id;
  std::optional<pm::Index> only_n, only_t;
  tab->add_option("--id", table_id, "T1..T6, A7..A17")->required();
  tab->add_option("--reps", reps, "Override the replication count");
  tab->add_option("--seed", seed, "Override the seed");
  tab->add_option("--n", only_n, "Run only cells with this N");
  tab->add_option("--t", only_t, "Run only cells with this T");
  tab->add_option("--threads", threads, "Worker threads (0 = auto)");
  tab->add_option("--out", out, "Write the CSV summary here");
  tab->add_option("--format", format, "stdout format: csv or text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: UsageError: " << one_line(e.what()) << '\n';
    return kErrorExit;
  }

  try {
    if (sim->parsed()) {
      const pm::RunConfig cfg = pm::parse_config(read_file(config_path));
      if (cfg.command == pm::Command::kAnalyze)
        throw pm::ValidationError("simulate needs a config with command: simulate or table");
      pm::StudyGrid grid = cfg.study;
      if (cfg.command == pm::Command::kTable) {
        grid = pm::find_table(cfg.table_id).grid;
        if (cfg.reps_override) grid.base.reps = *cfg.reps_override;
        if (cfg.seed_override) grid.base.seed = *cfg.seed_override;
      }
      if (seed) grid.base.seed = *seed;
      if (reps) grid.base.reps = *reps;
      grid.base.validate();
      const std::string dest = out.empty() ? cfg.output_path : out;
      emit_study(pm::run_study(grid, thread_count(threads, cfg.threads)), format, dest);
      return 0;
    }
    if (ana->parsed()) {
      if (!analyze_config.empty()) {
        const pm::RunConfig cfg = pm::parse_config(read_file(analyze_config));
        if (cfg.command != pm::Command::kAnalyze)
          throw pm::ValidationError("--config must hold command: analyze");
        const pm::AnalyzeOptions& c = cfg.analyze;
        return run_analysis(c, out.empty() ? cfg.output_path : out);
      }
      if (a.panel_path.empty() || a.predict_path.empty())
        throw pm::ValidationError("analyze needs --panel and --predict (or --config)");
      if (bandwidth < 0) throw pm::ValidationError("bandwidth must be >= 1");
      if (!(a.kernel.b_prime > 0.0)) throw pm::ValidationError("b_prime must be positive");
      a.sigma = sigma_from_flag(sigma_name, bandwidth);
      return run_analysis(a, out);
    }
    if (tab->parsed()) {
      pm::StudyGrid grid = pm::find_table(table_id).grid;
      if (seed) grid.base.seed = *seed;
      if (reps) grid.base.reps = *reps;
      std::erase_if(grid.cells, [&](const auto& c) {
        return (only_n && c.first != *only_n) || (only_t && c.second != *only_t);
      });
      grid.base.validate();
      emit_study(pm::run_study(grid, thread_count(threads, 0)), format, out);
      return 0;
    }
  } catch (const pm::Error& e) {
    std::cerr << "error: " << e.code() << ": " << one_line(e.what()) << '\n';
    return kErrorExit;
  } catch (const std::exception& e) {
    std::cerr << "error: InternalError: " << one_line(e.what()) << '\n';
    return kErrorExit;
  }
  return kErrorExit;
}

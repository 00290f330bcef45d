#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "panel_msfe/inference.hpp"
#include "panel_msfe/oracle.hpp"
#include "panel_msfe/panel.hpp"
#include "panel_msfe/rng.hpp"
#include "panel_msfe/sigma.hpp"

namespace panel_msfe {

struct Homogeneous {
  double value = 1.0;
  friend bool operator==(const Homogeneous&, const Homogeneous&) = default;
};
/// beta_i = lo (every component) for the first floor(N/2) individuals, hi otherwise.
struct HalfSplit {
  double lo = 1.0;
  double hi = 2.0;
  friend bool operator==(const HalfSplit&, const HalfSplit&) = default;
};
/// Components of beta_i drawn iid N(mean, sd^2).
struct RandomNormal {
  double mean = 0.0;
  double sd = 1.0;
  friend bool operator==(const RandomNormal&, const RandomNormal&) = default;
};
using SlopeDesign = std::variant<Homogeneous, HalfSplit, RandomNormal>;

struct IIDNormal {
  friend bool operator==(const IIDNormal&, const IIDNormal&) = default;
};
/// Stationary AR(1) with unit innovation variance.
struct AR1 {
  double phi = 0.3;
  friend bool operator==(const AR1&, const AR1&) = default;
};
/// eps = |x_1| u with u iid N(0, 1).
struct Hetero {
  friend bool operator==(const Hetero&, const Hetero&) = default;
};
/// eps = |x_1| u with u a stationary AR(1).
struct HeteroAR1 {
  double phi = 0.3;
  friend bool operator==(const HeteroAR1&, const HeteroAR1&) = default;
};
using ErrorDesign = std::variant<IIDNormal, AR1, Hetero, HeteroAR1>;

struct ScenarioConfig {
  std::string name = "scenario";
  Index n = 100;
  Index t_len = 10;
  Index k = 5;
  Index reps = 5000;
  double alpha = 0.05;
  SlopeDesign slope_design = Homogeneous{};
  ErrorDesign error_design = IIDNormal{};
  bool fixed_effects = false;
  SigmaSpec sigma_spec = SigmaSpec::banded(0);
  KernelSpec kernel{};
  std::uint64_t seed = 20240101;
  /// Keep regressors, x_{i,T+1} and slopes fixed across replications; only
  /// the errors are redrawn.
  bool fixed_design = false;
  bool strict_paper_ci = false;
  LambdaSign lambda_sign = LambdaSign::kDerived;

  /// Throws ValidationError naming the violated invariant.
  void validate() const {
    if (n < 1) throw ValidationError("n must be >= 1");
    if (k < 1) throw ValidationError("k must be >= 1");
    if (t_len <= k) throw ValidationError("t_len must exceed k");
    if (reps < 1) throw ValidationError("reps must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha out of (0,1)");
    if (kernel.b_prime <= 0.0) throw ValidationError("b_prime must be positive");
    std::visit(
        [](const auto& e) {
          using E = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<E, AR1> || std::is_same_v<E, HeteroAR1>)
            if (!(e.phi > -1.0 && e.phi < 1.0)) throw ValidationError("phi out of (-1,1)");
        },
        error_design);
    if (const auto* r = std::get_if<RandomNormal>(&slope_design); r && r->sd < 0.0)
      throw ValidationError("slope sd must be non-negative");
  }

  ScenarioConfig with_cell(Index n_, Index t_) const {
    ScenarioConfig c = *this;
    c.n = n_;
    c.t_len = t_;
    return c;
  }

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

struct SimulatedPanel {
  Panel panel;  ///< raw data (fixed effects included, not demeaned)
  TrueModel truth;
};

namespace detail {

inline MatrixXd draw_slopes(const ScenarioConfig& cfg, PhiloxStream& rng) {
  MatrixXd betas(cfg.k, cfg.n);
  std::visit(
      [&](const auto& d) {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, Homogeneous>) {
          betas.setConstant(d.value);
        } else if constexpr (std::is_same_v<D, HalfSplit>) {
          const Index half = cfg.n / 2;
          for (Index i = 0; i < cfg.n; ++i) betas.col(i).setConstant(i < half ? d.lo : d.hi);
        } else {
          for (Index i = 0; i < cfg.n; ++i)
            for (Index j = 0; j < cfg.k; ++j) betas(j, i) = rng.normal(d.mean, d.sd);
        }
      },
      cfg.slope_design);
  return betas;
}

struct Design {
  std::vector<MatrixXd> x;
  MatrixXd x_next;
  MatrixXd betas;
  VectorXd effects;  ///< alpha_i (fixed-effects designs only)
};

inline Design draw_design(const ScenarioConfig& cfg, PhiloxStream& rng) {
  Design d;
  d.x.reserve(cfg.n);
  d.x_next.resize(cfg.k, cfg.n);
  for (Index i = 0; i < cfg.n; ++i) {
    MatrixXd xi(cfg.t_len, cfg.k);
    for (Index t = 0; t < cfg.t_len; ++t)
      for (Index j = 0; j < cfg.k; ++j) xi(t, j) = rng.normal(1.0, 1.0);
    for (Index j = 0; j < cfg.k; ++j) d.x_next(j, i) = rng.normal(1.0, 1.0);
    d.x.push_back(std::move(xi));
  }
  d.betas = draw_slopes(cfg, rng);
  if (cfg.fixed_effects) {
    d.effects.resize(cfg.n);
    for (Index i = 0; i < cfg.n; ++i) d.effects(i) = rng.normal(d.x[i].mean(), 1.0);
  }
  return d;
}

inline void fill_ar1(VectorXd& u, double phi, PhiloxStream& rng) {
  u(0) = rng.normal() / std::sqrt(1.0 - phi * phi);
  for (Index t = 1; t < u.size(); ++t) u(t) = phi * u(t - 1) + rng.normal();
}

inline SimulatedPanel assemble(const ScenarioConfig& cfg, const Design& d, PhiloxStream& rng) {
  const Index n = cfg.n;
  const Index t = cfg.t_len;
  SimulatedPanel out;
  out.panel.x = d.x;
  out.panel.x_next = d.x_next;
  out.panel.y.resize(t, n);
  out.truth.betas = d.betas;
  out.truth.sigma_n = CrossCov::identity(n);

  double phi = 0.0;
  bool hetero = false;
  std::visit(
      [&](const auto& e) {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, AR1>) phi = e.phi;
        if constexpr (std::is_same_v<E, Hetero>) hetero = true;
        if constexpr (std::is_same_v<E, HeteroAR1>) {
          phi = e.phi;
          hetero = true;
        }
      },
      cfg.error_design);
  const bool serial = std::holds_alternative<AR1>(cfg.error_design) ||
                      std::holds_alternative<HeteroAR1>(cfg.error_design);
  out.truth.sigma_t = serial ? CovOperator::ar1(t, phi) : CovOperator::identity(t);
  if (hetero) {
    out.truth.error_scale.resize(t, n);
    out.truth.next_scale.resize(n);
  }

  VectorXd u(t);
  for (Index i = 0; i < n; ++i) {
    if (serial) {
      fill_ar1(u, phi, rng);
    } else {
      for (Index s = 0; s < t; ++s) u(s) = rng.normal();
    }
    if (hetero) {
      out.truth.error_scale.col(i) = d.x[i].col(0).cwiseAbs();
      out.truth.next_scale(i) = std::abs(d.x_next(0, i));
      u.array() *= out.truth.error_scale.col(i).array();
    }
    out.panel.y.col(i) = d.x[i] * d.betas.col(i) + u;
    if (cfg.fixed_effects) out.panel.y.col(i).array() += d.effects(i);
  }
  return out;
}

inline constexpr std::uint32_t kFixedDesignRep = 0xFFFFFFFFu;

inline std::uint32_t cell_key(Index n, Index t) {
  return (static_cast<std::uint32_t>(n) << 16) ^ static_cast<std::uint32_t>(t);
}

}  // namespace detail

/// Draws regressors, slopes and errors for one replication from `stream`.
inline SimulatedPanel simulate_panel(const ScenarioConfig& cfg, PhiloxStream& stream) {
  cfg.validate();
  const detail::Design d = detail::draw_design(cfg, stream);
  return detail::assemble(cfg, d, stream);
}

struct IntervalOutcome {
  bool covered = false;
  double length = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct ReplicationRecord {
  double truth_diff = 0.0;  ///< E^pool - E^ind
  IntervalOutcome feasible;
  IntervalOutcome infeasible;
  bool degenerate = false;
  /// Standardized statistic sqrt(N) T (point - truth_diff) / tau_N; NaN when degenerate.
  double z_oracle = 0.0;
};

/// Fits one simulated panel and evaluates both intervals against the exact
/// error difference.
inline ReplicationRecord evaluate_replication(const ScenarioConfig& cfg, const SimulatedPanel& sim) {
  const Panel panel = cfg.fixed_effects ? within_demean(sim.panel) : sim.panel;
  const TrueModel& truth = sim.truth;
  const PanelGeometry geo(panel);
  const SlopeEstimates slopes = fit_slopes(panel, geo);
  const ResidualSet resid = residuals(panel, slopes);

  const auto true_pairs = true_pair_crosses(panel, truth);
  const ErrorDecomposition dec = decompose_errors(panel, truth, geo, true_pairs);

  ReplicationRecord rec;
  rec.truth_diff = dec.diff;
  auto outcome = [&](const InferenceResult& r) {
    return IntervalOutcome{r.covers(rec.truth_diff), r.length(), r.lo, r.hi};
  };

  InferenceOptions opts;
  opts.alpha = cfg.alpha;
  opts.strict_paper_ci = cfg.strict_paper_ci;
  opts.lambda_sign = cfg.lambda_sign;
  const InferenceResult feasible =
      run_inference(panel, geo, slopes, resid, cfg.sigma_spec, cfg.kernel, opts);
  rec.feasible = outcome(feasible);
  rec.degenerate = feasible.degenerate_variance;

  // Infeasible benchmark: with the true covariance E1_hat equals E1, and the
  // variance is the oracle tau_N^2.
  const double eh = feasible.e_hat;
  try {
    const double tau = oracle_tau(panel, truth, geo, true_pairs, cfg.lambda_sign);
    const InferenceResult inf = confidence_interval(eh, dec.e1, tau, panel.n(), panel.t_len(),
                                                    cfg.alpha, cfg.strict_paper_ci);
    rec.infeasible = outcome(inf);
    rec.z_oracle = std::sqrt(static_cast<double>(panel.n())) * static_cast<double>(panel.t_len()) *
                   (inf.point - rec.truth_diff) / std::sqrt(tau);
  } catch (const DegenerateVariance&) {
    rec.degenerate = true;
    rec.z_oracle = std::numeric_limits<double>::quiet_NaN();
  }
  return rec;
}

/// Replication `rep` of the (cfg.n, cfg.t_len) cell. The stream for a cell is
/// keyed by (N, T), so a cell gives the same records in any grid.
inline ReplicationRecord run_replication(const ScenarioConfig& cfg, std::uint32_t rep) {
  cfg.validate();
  const PhiloxStream root(cfg.seed);
  const std::uint32_t cell = detail::cell_key(cfg.n, cfg.t_len);
  PhiloxStream errors = root.substream(cell, 2 * rep + 1);
  detail::Design design;
  if (cfg.fixed_design) {
    PhiloxStream ds = root.substream(cell, detail::kFixedDesignRep);
    design = detail::draw_design(cfg, ds);
  } else {
    PhiloxStream ds = root.substream(cell, 2 * rep);
    design = detail::draw_design(cfg, ds);
  }
  return evaluate_replication(cfg, detail::assemble(cfg, design, errors));
}

/// Runs one replication from an explicit stream (design and errors drawn in sequence).
inline ReplicationRecord run_replication(const ScenarioConfig& cfg, PhiloxStream& stream) {
  return evaluate_replication(cfg, simulate_panel(cfg, stream));
}

struct CellSummary {
  std::string scenario;
  Index n = 0;
  Index t_len = 0;
  Index reps = 0;
  double cov_feasible = 0.0;
  double len_feasible = 0.0;
  double cov_infeasible = 0.0;
  double len_infeasible = 0.0;
  Index degenerate = 0;

  static double binomial_se(double p, Index reps) {
    return reps > 0 ? std::sqrt(p * (1.0 - p) / static_cast<double>(reps)) : 0.0;
  }
  double mc_se_feasible() const { return binomial_se(cov_feasible, reps); }
  double mc_se_infeasible() const { return binomial_se(cov_infeasible, reps); }
};

struct StudySummary {
  std::string scenario;
  std::vector<CellSummary> cells;
};

/// Order-stable aggregation of replication records into one cell.
inline CellSummary summarize(const ScenarioConfig& cfg, const std::vector<ReplicationRecord>& recs) {
  CellSummary c;
  c.scenario = cfg.name;
  c.n = cfg.n;
  c.t_len = cfg.t_len;
  c.reps = static_cast<Index>(recs.size());
  if (recs.empty()) return c;
  for (const auto& r : recs) {
    c.cov_feasible += r.feasible.covered ? 1.0 : 0.0;
    c.len_feasible += r.feasible.length;
    c.cov_infeasible += r.infeasible.covered ? 1.0 : 0.0;
    c.len_infeasible += r.infeasible.length;
    c.degenerate += r.degenerate ? 1 : 0;
  }
  const double m = static_cast<double>(recs.size());
  c.cov_feasible /= m;
  c.len_feasible /= m;
  c.cov_infeasible /= m;
  c.len_infeasible /= m;
  return c;
}

/// Worker count: explicit value, else hardware concurrency.
inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// All replications of one cell; records are returned in replication order
/// whatever the thread count.
inline std::vector<ReplicationRecord> run_cell(const ScenarioConfig& cfg, unsigned threads = 0) {
  cfg.validate();
  const auto reps = static_cast<std::size_t>(cfg.reps);
  std::vector<ReplicationRecord> recs(reps);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto work = [&] {
    try {
      for (std::size_t r = next++; r < reps && !failed; r = next++)
        recs[r] = run_replication(cfg, static_cast<std::uint32_t>(r));
    } catch (...) {
      if (!failed.exchange(true)) failure = std::current_exception();
    }
  };
  const unsigned nt = std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(reps));
  if (nt <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < nt; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return recs;
}

/// Grid of (N, T) cells sharing one scenario.
struct StudyGrid {
  ScenarioConfig base;
  std::vector<std::pair<Index, Index>> cells;  ///< (N, T)

  friend bool operator==(const StudyGrid&, const StudyGrid&) = default;
};

inline StudySummary run_study(const StudyGrid& grid, unsigned threads = 0) {
  StudySummary out;
  out.scenario = grid.base.name;
  for (const auto& [n, t] : grid.cells) {
    const ScenarioConfig cfg = grid.base.with_cell(n, t);
    out.cells.push_back(summarize(cfg, run_cell(cfg, threads)));
  }
  return out;
}

enum class TableFormat { kCsv, kText };

inline constexpr const char* kCsvHeader =
    "scenario,N,T,cov_feasible,len_feasible,cov_infeasible,len_infeasible,mc_se,reps";

/// CSV (one row per cell, `mc_se` is the feasible coverage standard error) or
/// an aligned table with T rows and one column group per N.
inline std::string emit_table(const StudySummary& summary, TableFormat format) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  if (format == TableFormat::kCsv) {
    os << kCsvHeader << '\n';
    for (const auto& c : summary.cells)
      os << c.scenario << ',' << c.n << ',' << c.t_len << ',' << c.cov_feasible << ','
         << c.len_feasible << ',' << c.cov_infeasible << ',' << c.len_infeasible << ','
         << c.mc_se_feasible() << ',' << c.reps << '\n';
    return os.str();
  }

  std::vector<Index> ns, ts;
  std::map<std::pair<Index, Index>, const CellSummary*> lookup;
  for (const auto& c : summary.cells) {
    if (std::find(ns.begin(), ns.end(), c.n) == ns.end()) ns.push_back(c.n);
    if (std::find(ts.begin(), ts.end(), c.t_len) == ts.end()) ts.push_back(c.t_len);
    lookup[{c.n, c.t_len}] = &c;
  }
  std::sort(ns.begin(), ns.end());
  std::sort(ts.begin(), ts.end());

  constexpr int w = 9;
  os << std::setw(5) << "T";
  for (Index n : ns) {
    std::ostringstream g;
    g << "N=" << n;
    os << " |" << std::setw(4 * w) << g.str();
  }
  os << '\n' << std::setw(5) << "";
  for (std::size_t g = 0; g < ns.size(); ++g)
    os << " |" << std::setw(w) << "cov" << std::setw(w) << "len" << std::setw(w) << "cov*"
       << std::setw(w) << "len*";
  os << '\n';
  for (Index t : ts) {
    os << std::setw(5) << t;
    for (Index n : ns) {
      os << " |";
      const auto it = lookup.find({n, t});
      if (it == lookup.end()) {
        for (int j = 0; j < 4; ++j) os << std::setw(w) << "-";
      } else {
        const CellSummary& c = *it->second;
        os << std::setw(w) << c.cov_feasible << std::setw(w) << c.len_feasible << std::setw(w)
           << c.cov_infeasible << std::setw(w) << c.len_infeasible;
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace panel_msfe

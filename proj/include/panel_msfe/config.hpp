#pragma once

// Run configuration files (YAML). Requires linking yaml-cpp.
//
// Grammar:
//
//   command: simulate | analyze | table
//   threads: 0                   # 0 = auto
//   output: results.csv          # optional
//   scenario:                    # simulate
//     name: T2                   # a registered table id seeds all defaults
//     n: 100
//     t_len: 40
//     k: 5
//     reps: 5000
//     alpha: 0.05
//     seed: 20240101
//     fixed_effects: false
//     fixed_design: false
//     strict_paper_ci: false
//     lambda_sign: derived | displayed
//     slopes: {design: homogeneous, value: 1}
//           | {design: half_split, lo: 1, hi: 2}
//           | {design: random_normal, mean: 0, sd: 1}
//     errors: {design: iid} | {design: ar1, phi: 0.3}
//           | {design: hetero} | {design: hetero_ar1, phi: 0.3}
//     sigma: <sigma>
//     kernel: {shape: bartlett | parzen, b_prime: 1}
//     grid: [[100, 10], [100, 20]]   # (N, T) cells; default is the single (n, t_len)
//   analyze:
//     panel: data.csv
//     predict: predict.csv
//     columns: {id: id, time: t, y: y, x: [x1, x2]}   # x defaults to all other columns
//     sigma: <sigma>
//     kernel: {...}
//     alpha: 0.05
//     fixed_effects: false
//     strict_paper_ci: false
//   table:
//     id: T1
//     reps: 200                  # optional override
//     seed: 7                    # optional override
//
//   <sigma> := {estimator: banded, bandwidth: auto | B}
//            | {estimator: ar1}
//            | {estimator: hac, bandwidth: auto | B}
//            | {estimator: hetero, scale_component: 1, inner: <sigma>}
//            | {estimator: true}
//            each optionally with demean_adjust: true

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "panel_msfe/error.hpp"
#include "panel_msfe/panel_csv.hpp"
#include "panel_msfe/simulation.hpp"
#include "panel_msfe/table_registry.hpp"

namespace panel_msfe {

enum class Command { kSimulate, kAnalyze, kTable };

struct AnalyzeOptions {
  std::string panel_path;
  std::string predict_path;
  ColumnMapping columns;
  SigmaSpec sigma = SigmaSpec::banded(0);
  KernelSpec kernel{};
  double alpha = 0.05;
  bool fixed_effects = false;
  bool strict_paper_ci = false;
  friend bool operator==(const AnalyzeOptions&, const AnalyzeOptions&) = default;
};

struct RunConfig {
  Command command = Command::kSimulate;
  StudyGrid study;
  AnalyzeOptions analyze;
  std::string table_id;
  std::optional<Index> reps_override;
  std::optional<std::uint64_t> seed_override;
  std::string output_path;
  unsigned threads = 0;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string where(const YAML::Node& node, const std::string& field) {
  const auto m = node.Mark();
  if (m.is_null()) return "field '" + field + "'";
  return "line " + std::to_string(m.line + 1) + ", field '" + field + "'";
}

template <class T>
T get(const YAML::Node& parent, const std::string& field, T fallback) {
  const YAML::Node node = parent[field];
  if (!node.IsDefined() || node.IsNull()) return fallback;
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ParseError(where(node, field) + ": cannot read value '" +
                     (node.IsScalar() ? node.Scalar() : std::string("<non-scalar>")) + "'");
  }
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline Index read_bandwidth(const YAML::Node& node) {
  const YAML::Node b = node["bandwidth"];
  if (!b.IsDefined() || b.IsNull()) return 0;
  if (b.IsScalar() && lower(b.Scalar()) == "auto") return 0;
  const Index v = get<Index>(node, "bandwidth", 0);
  if (v < 1) throw ValidationError("bandwidth must be >= 1 or 'auto'");
  return v;
}

inline SigmaSpec parse_sigma(const YAML::Node& node) {
  if (!node.IsDefined() || node.IsNull()) return SigmaSpec::banded(0);
  if (!node.IsMap()) throw ParseError(where(node, "sigma") + ": expected a mapping");
  const std::string est = lower(get<std::string>(node, "estimator", "banded"));
  SigmaSpec spec;
  if (est == "banded") {
    spec = SigmaSpec::banded(read_bandwidth(node));
  } else if (est == "ar1") {
    spec = SigmaSpec::ar1();
  } else if (est == "hac") {
    spec = SigmaSpec::hac(read_bandwidth(node));
  } else if (est == "hetero") {
    const Index comp = get<Index>(node, "scale_component", 1);
    if (comp < 1) throw ValidationError("scale_component is 1-based");
    const YAML::Node inner = node["inner"];
    spec = SigmaSpec::hetero(ScaleFunction::abs_component(comp - 1),
                             inner.IsDefined() ? parse_sigma(inner) : SigmaSpec::banded(1));
  } else if (est == "true") {
    spec = SigmaSpec::true_sigma();
  } else {
    throw ParseError(where(node["estimator"], "estimator") + ": unknown estimator '" + est + "'");
  }
  return spec.with_demean(get<bool>(node, "demean_adjust", false));
}

inline KernelSpec parse_kernel(const YAML::Node& node) {
  KernelSpec k;
  if (!node.IsDefined() || node.IsNull()) return k;
  const std::string shape = lower(get<std::string>(node, "shape", "bartlett"));
  if (shape == "bartlett") k.shape = KernelSpec::Shape::kBartlett;
  else if (shape == "parzen") k.shape = KernelSpec::Shape::kParzen;
  else throw ParseError(where(node["shape"], "shape") + ": unknown kernel '" + shape + "'");
  k.b_prime = get<double>(node, "b_prime", 1.0);
  if (!(k.b_prime > 0.0)) throw ValidationError("b_prime must be positive");
  return k;
}

inline SlopeDesign parse_slopes(const YAML::Node& node, SlopeDesign fallback) {
  if (!node.IsDefined() || node.IsNull()) return fallback;
  const std::string d = lower(get<std::string>(node, "design", "homogeneous"));
  if (d == "homogeneous") return Homogeneous{get<double>(node, "value", 1.0)};
  if (d == "half_split") return HalfSplit{get<double>(node, "lo", 1.0), get<double>(node, "hi", 2.0)};
  if (d == "random_normal")
    return RandomNormal{get<double>(node, "mean", 0.0), get<double>(node, "sd", 1.0)};
  throw ParseError(where(node["design"], "design") + ": unknown slope design '" + d + "'");
}

inline ErrorDesign parse_errors(const YAML::Node& node, ErrorDesign fallback) {
  if (!node.IsDefined() || node.IsNull()) return fallback;
  const std::string d = lower(get<std::string>(node, "design", "iid"));
  if (d == "iid") return IIDNormal{};
  if (d == "ar1") return AR1{get<double>(node, "phi", 0.3)};
  if (d == "hetero") return Hetero{};
  if (d == "hetero_ar1") return HeteroAR1{get<double>(node, "phi", 0.3)};
  throw ParseError(where(node["design"], "design") + ": unknown error design '" + d + "'");
}

inline StudyGrid parse_scenario(const YAML::Node& node) {
  if (!node.IsDefined() || !node.IsMap())
    throw ParseError("simulate needs a 'scenario' mapping");
  StudyGrid grid;
  const std::string name = get<std::string>(node, "name", "scenario");
  bool from_table = false;
  for (const auto& t : table_registry()) {
    if (t.id == name) {
      grid = t.grid;
      from_table = true;
    }
  }
  ScenarioConfig& c = grid.base;
  c.name = name;
  c.n = get<Index>(node, "n", c.n);
  c.t_len = get<Index>(node, "t_len", c.t_len);
  c.k = get<Index>(node, "k", c.k);
  c.reps = get<Index>(node, "reps", c.reps);
  c.alpha = get<double>(node, "alpha", c.alpha);
  c.seed = get<std::uint64_t>(node, "seed", c.seed);
  c.fixed_effects = get<bool>(node, "fixed_effects", c.fixed_effects);
  c.fixed_design = get<bool>(node, "fixed_design", c.fixed_design);
  c.strict_paper_ci = get<bool>(node, "strict_paper_ci", c.strict_paper_ci);
  const std::string sign = lower(get<std::string>(
      node, "lambda_sign", c.lambda_sign == LambdaSign::kDerived ? "derived" : "displayed"));
  if (sign == "derived") c.lambda_sign = LambdaSign::kDerived;
  else if (sign == "displayed") c.lambda_sign = LambdaSign::kDisplayed;
  else throw ParseError(where(node["lambda_sign"], "lambda_sign") + ": expected derived or displayed");
  c.slope_design = parse_slopes(node["slopes"], c.slope_design);
  c.error_design = parse_errors(node["errors"], c.error_design);
  if (node["sigma"].IsDefined()) c.sigma_spec = parse_sigma(node["sigma"]);
  if (node["kernel"].IsDefined()) c.kernel = parse_kernel(node["kernel"]);

  const YAML::Node cells = node["grid"];
  if (cells.IsDefined() && !cells.IsNull()) {
    if (!cells.IsSequence()) throw ParseError(where(cells, "grid") + ": expected a list of [N, T]");
    grid.cells.clear();
    for (const auto& cell : cells) {
      if (!cell.IsSequence() || cell.size() != 2)
        throw ParseError(where(cell, "grid") + ": each cell is [N, T]");
      try {
        grid.cells.emplace_back(cell[0].as<Index>(), cell[1].as<Index>());
      } catch (const YAML::Exception&) {
        throw ParseError(where(cell, "grid") + ": cell entries must be integers");
      }
    }
  } else if (!from_table || node["n"].IsDefined() || node["t_len"].IsDefined()) {
    grid.cells = {{c.n, c.t_len}};
  }
  c.validate();
  for (const auto& [n, t] : grid.cells) c.with_cell(n, t).validate();
  return grid;
}

inline AnalyzeOptions parse_analyze(const YAML::Node& node) {
  if (!node.IsDefined() || !node.IsMap()) throw ParseError("analyze needs an 'analyze' mapping");
  AnalyzeOptions a;
  a.panel_path = get<std::string>(node, "panel", "");
  a.predict_path = get<std::string>(node, "predict", "");
  if (a.panel_path.empty()) throw ValidationError("analyze.panel is required");
  if (a.predict_path.empty()) throw ValidationError("analyze.predict is required");
  if (const YAML::Node cols = node["columns"]; cols.IsDefined() && cols.IsMap()) {
    a.columns.id = get<std::string>(cols, "id", a.columns.id);
    a.columns.time = get<std::string>(cols, "time", a.columns.time);
    a.columns.y = get<std::string>(cols, "y", a.columns.y);
    a.columns.x = get<std::vector<std::string>>(cols, "x", {});
  }
  a.sigma = parse_sigma(node["sigma"]);
  a.kernel = parse_kernel(node["kernel"]);
  a.alpha = get<double>(node, "alpha", a.alpha);
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw ValidationError("alpha out of (0,1)");
  a.fixed_effects = get<bool>(node, "fixed_effects", false);
  a.strict_paper_ci = get<bool>(node, "strict_paper_ci", false);
  return a;
}

}  // namespace detail

/// Parses and validates a run configuration; every omitted field takes its
/// default. Throws ParseError (with line and field) or ValidationError.
inline RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ParseError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) throw ParseError("configuration must be a mapping");
  RunConfig cfg;
  const std::string command = detail::lower(detail::get<std::string>(root, "command", ""));
  if (command == "simulate") cfg.command = Command::kSimulate;
  else if (command == "analyze") cfg.command = Command::kAnalyze;
  else if (command == "table") cfg.command = Command::kTable;
  else throw ValidationError("command must be one of simulate, analyze, table");

  const long threads = detail::get<long>(root, "threads", 0);
  if (threads < 0) throw ValidationError("threads must be >= 0");
  cfg.threads = static_cast<unsigned>(threads);
  cfg.output_path = detail::get<std::string>(root, "output", "");

  switch (cfg.command) {
    case Command::kSimulate:
      cfg.study = detail::parse_scenario(root["scenario"]);
      break;
    case Command::kAnalyze:
      cfg.analyze = detail::parse_analyze(root["analyze"]);
      break;
    case Command::kTable: {
      const YAML::Node t = root["table"];
      if (!t.IsDefined() || !t.IsMap()) throw ParseError("table needs a 'table' mapping");
      cfg.table_id = detail::get<std::string>(t, "id", "");
      find_table(cfg.table_id);
      if (t["reps"].IsDefined()) {
        cfg.reps_override = detail::get<Index>(t, "reps", 1);
        if (*cfg.reps_override < 1) throw ValidationError("reps must be >= 1");
      }
      if (t["seed"].IsDefined()) cfg.seed_override = detail::get<std::uint64_t>(t, "seed", 0);
      break;
    }
  }
  return cfg;
}

namespace detail {

inline void emit_sigma(YAML::Emitter& out, const SigmaSpec& spec) {
  out << YAML::BeginMap;
  std::visit(
      [&](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        auto bandwidth = [&](Index b) {
          out << YAML::Key << "bandwidth";
          if (b > 0) out << YAML::Value << b;
          else out << YAML::Value << "auto";
        };
        if constexpr (std::is_same_v<V, SigmaSpec::Banded>) {
          out << YAML::Key << "estimator" << YAML::Value << "banded";
          bandwidth(v.bandwidth);
        } else if constexpr (std::is_same_v<V, SigmaSpec::Ar1Parametric>) {
          out << YAML::Key << "estimator" << YAML::Value << "ar1";
        } else if constexpr (std::is_same_v<V, SigmaSpec::Hac>) {
          out << YAML::Key << "estimator" << YAML::Value << "hac";
          bandwidth(v.bandwidth);
        } else if constexpr (std::is_same_v<V, SigmaSpec::HeteroScaled>) {
          if (v.scale.kind != ScaleFunction::Kind::kAbsComponent)
            throw ValidationError("only |x_c| scale functions can be written to a config");
          out << YAML::Key << "estimator" << YAML::Value << "hetero";
          out << YAML::Key << "scale_component" << YAML::Value << v.scale.component + 1;
          out << YAML::Key << "inner" << YAML::Value;
          emit_sigma(out, v.inner ? *v.inner : SigmaSpec::banded(1));
        } else {
          if (v.truth) throw ValidationError("a known covariance cannot be written to a config");
          out << YAML::Key << "estimator" << YAML::Value << "true";
        }
      },
      spec.variant);
  out << YAML::Key << "demean_adjust" << YAML::Value << spec.demean_adjust;
  out << YAML::EndMap;
}

inline void emit_kernel(YAML::Emitter& out, const KernelSpec& k) {
  out << YAML::BeginMap << YAML::Key << "shape" << YAML::Value
      << (k.shape == KernelSpec::Shape::kBartlett ? "bartlett" : "parzen") << YAML::Key << "b_prime"
      << YAML::Value << k.b_prime << YAML::EndMap;
}

}  // namespace detail

/// Serializes a configuration in the grammar accepted by parse_config.
inline std::string emit_config(const RunConfig& cfg) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "command" << YAML::Value
      << (cfg.command == Command::kSimulate ? "simulate"
          : cfg.command == Command::kAnalyze ? "analyze"
                                              : "table");
  out << YAML::Key << "threads" << YAML::Value << cfg.threads;
  if (!cfg.output_path.empty()) out << YAML::Key << "output" << YAML::Value << cfg.output_path;

  if (cfg.command == Command::kSimulate) {
    const ScenarioConfig& c = cfg.study.base;
    out << YAML::Key << "scenario" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << c.name;
    out << YAML::Key << "n" << YAML::Value << c.n;
    out << YAML::Key << "t_len" << YAML::Value << c.t_len;
    out << YAML::Key << "k" << YAML::Value << c.k;
    out << YAML::Key << "reps" << YAML::Value << c.reps;
    out << YAML::Key << "alpha" << YAML::Value << c.alpha;
    out << YAML::Key << "seed" << YAML::Value << c.seed;
    out << YAML::Key << "fixed_effects" << YAML::Value << c.fixed_effects;
    out << YAML::Key << "fixed_design" << YAML::Value << c.fixed_design;
    out << YAML::Key << "strict_paper_ci" << YAML::Value << c.strict_paper_ci;
    out << YAML::Key << "lambda_sign" << YAML::Value
        << (c.lambda_sign == LambdaSign::kDerived ? "derived" : "displayed");
    out << YAML::Key << "slopes" << YAML::Value << YAML::BeginMap;
    std::visit(
        [&](const auto& d) {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, Homogeneous>)
            out << YAML::Key << "design" << YAML::Value << "homogeneous" << YAML::Key << "value"
                << YAML::Value << d.value;
          else if constexpr (std::is_same_v<D, HalfSplit>)
            out << YAML::Key << "design" << YAML::Value << "half_split" << YAML::Key << "lo"
                << YAML::Value << d.lo << YAML::Key << "hi" << YAML::Value << d.hi;
          else
            out << YAML::Key << "design" << YAML::Value << "random_normal" << YAML::Key << "mean"
                << YAML::Value << d.mean << YAML::Key << "sd" << YAML::Value << d.sd;
        },
        c.slope_design);
    out << YAML::EndMap;
    out << YAML::Key << "errors" << YAML::Value << YAML::BeginMap;
    std::visit(
        [&](const auto& e) {
          using E = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<E, IIDNormal>)
            out << YAML::Key << "design" << YAML::Value << "iid";
          else if constexpr (std::is_same_v<E, AR1>)
            out << YAML::Key << "design" << YAML::Value << "ar1" << YAML::Key << "phi" << YAML::Value
                << e.phi;
          else if constexpr (std::is_same_v<E, Hetero>)
            out << YAML::Key << "design" << YAML::Value << "hetero";
          else
            out << YAML::Key << "design" << YAML::Value << "hetero_ar1" << YAML::Key << "phi"
                << YAML::Value << e.phi;
        },
        c.error_design);
    out << YAML::EndMap;
    out << YAML::Key << "sigma" << YAML::Value;
    detail::emit_sigma(out, c.sigma_spec);
    out << YAML::Key << "kernel" << YAML::Value;
    detail::emit_kernel(out, c.kernel);
    out << YAML::Key << "grid" << YAML::Value << YAML::BeginSeq;
    for (const auto& [n, t] : cfg.study.cells)
      out << YAML::Flow << YAML::BeginSeq << n << t << YAML::EndSeq;
    out << YAML::EndSeq;
    out << YAML::EndMap;
  } else if (cfg.command == Command::kAnalyze) {
    const AnalyzeOptions& a = cfg.analyze;
    out << YAML::Key << "analyze" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "panel" << YAML::Value << a.panel_path;
    out << YAML::Key << "predict" << YAML::Value << a.predict_path;
    out << YAML::Key << "columns" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << a.columns.id;
    out << YAML::Key << "time" << YAML::Value << a.columns.time;
    out << YAML::Key << "y" << YAML::Value << a.columns.y;
    out << YAML::Key << "x" << YAML::Value << YAML::Flow << a.columns.x;
    out << YAML::EndMap;
    out << YAML::Key << "sigma" << YAML::Value;
    detail::emit_sigma(out, a.sigma);
    out << YAML::Key << "kernel" << YAML::Value;
    detail::emit_kernel(out, a.kernel);
    out << YAML::Key << "alpha" << YAML::Value << a.alpha;
    out << YAML::Key << "fixed_effects" << YAML::Value << a.fixed_effects;
    out << YAML::Key << "strict_paper_ci" << YAML::Value << a.strict_paper_ci;
    out << YAML::EndMap;
  } else {
    out << YAML::Key << "table" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << cfg.table_id;
    if (cfg.reps_override) out << YAML::Key << "reps" << YAML::Value << *cfg.reps_override;
    if (cfg.seed_override) out << YAML::Key << "seed" << YAML::Value << *cfg.seed_override;
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace panel_msfe

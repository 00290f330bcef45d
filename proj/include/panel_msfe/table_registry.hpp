#pragma once

#include <string>
#include <utility>
#include <vector>

#include "panel_msfe/error.hpp"
#include "panel_msfe/simulation.hpp"

namespace panel_msfe {

/// One reproducible coverage table: the scenario and its (N, T) grid.
struct TableSpec {
  std::string id;
  std::string title;
  StudyGrid grid;
};

namespace detail {

inline std::vector<std::pair<Index, Index>> grid_cells(const std::vector<Index>& ts) {
  std::vector<std::pair<Index, Index>> cells;
  for (Index n : {Index{100}, Index{500}})
    for (Index t : ts) cells.emplace_back(n, t);
  return cells;
}

inline const std::vector<Index> kMainT{10, 15, 20, 25, 30, 40, 60, 80};
inline const std::vector<Index> kHeteroT{10, 15, 20, 25, 30, 40, 60, 80, 100};
inline const std::vector<Index> kShortT{10, 15, 20, 25, 30, 40, 60};
inline const std::vector<Index> kHacT{40, 60, 80, 100, 120, 150, 180};
inline const std::vector<Index> kLongHacT{100, 120, 150, 180};

inline TableSpec make_table(std::string id, std::string title, SlopeDesign slopes,
                            ErrorDesign errors, SigmaSpec sigma, bool fixed_effects,
                            const std::vector<Index>& ts) {
  ScenarioConfig cfg;
  cfg.name = id;
  cfg.slope_design = std::move(slopes);
  cfg.error_design = std::move(errors);
  cfg.sigma_spec = std::move(sigma);
  cfg.fixed_effects = fixed_effects;
  return {id, std::move(title), StudyGrid{cfg, grid_cells(ts)}};
}

}  // namespace detail

/// Every built-in scenario. Bandwidth 0 means round(T^{2/7}).
inline const std::vector<TableSpec>& table_registry() {
  using detail::make_table;
  static const std::vector<TableSpec> tables = [] {
    const SlopeDesign hom = Homogeneous{1.0};
    const SlopeDesign het = HalfSplit{1.0, 2.0};
    const SigmaSpec iid = SigmaSpec::banded(1);
    const SigmaSpec auto_band = SigmaSpec::banded(0);
    const SigmaSpec hetero = SigmaSpec::hetero(ScaleFunction::abs_component(0), SigmaSpec::banded(1));
    return std::vector<TableSpec>{
        make_table("T1", "homogeneous slopes, iid errors", hom, IIDNormal{}, iid, false, detail::kMainT),
        make_table("T2", "heterogeneous slopes, iid errors", het, IIDNormal{}, iid, false, detail::kMainT),
        make_table("T3", "homogeneous slopes, AR(1) errors phi=0.3", hom, AR1{0.3}, auto_band, false,
                   detail::kMainT),
        make_table("T4", "heterogeneous slopes, AR(1) errors phi=0.3", het, AR1{0.3}, auto_band, false,
                   detail::kMainT),
        make_table("T5", "homogeneous slopes, fixed effects", hom, IIDNormal{}, iid.with_demean(), true,
                   detail::kMainT),
        make_table("T6", "heterogeneous slopes, fixed effects", het, IIDNormal{}, iid.with_demean(), true,
                   detail::kMainT),
        make_table("A7", "homogeneous slopes, heteroskedastic errors", hom, Hetero{}, iid, false,
                   detail::kHeteroT),
        make_table("A8", "heterogeneous slopes, heteroskedastic errors", het, Hetero{}, iid, false,
                   detail::kHeteroT),
        make_table("A9", "homogeneous slopes, heteroskedastic errors, scaled estimator", hom, Hetero{},
                   hetero, false, detail::kShortT),
        make_table("A10", "heterogeneous slopes, heteroskedastic errors, scaled estimator", het,
                   Hetero{}, hetero, false, detail::kShortT),
        make_table("A11", "homogeneous slopes, AR(1) errors phi=0.5", hom, AR1{0.5}, auto_band, false,
                   detail::kMainT),
        make_table("A12", "heterogeneous slopes, AR(1) errors phi=0.5", het, AR1{0.5}, auto_band, false,
                   detail::kMainT),
        make_table("A13", "homogeneous slopes, AR(1) errors phi=0.5, parametric estimator", hom,
                   AR1{0.5}, SigmaSpec::ar1(), false, detail::kShortT),
        make_table("A14", "heterogeneous slopes, AR(1) errors phi=0.5, parametric estimator", het,
                   AR1{0.5}, SigmaSpec::ar1(), false, detail::kShortT),
        make_table("A15", "homogeneous slopes, heteroskedastic AR(1) errors, HAC estimator", hom,
                   HeteroAR1{0.3}, SigmaSpec::hac(0), false, detail::kHacT),
        make_table("A16", "heterogeneous slopes, heteroskedastic AR(1) errors, HAC estimator", het,
                   HeteroAR1{0.3}, SigmaSpec::hac(0), false, detail::kLongHacT),
        make_table("A17", "random normal slopes N(1,1), fixed effects", RandomNormal{1.0, 1.0},
                   IIDNormal{}, iid.with_demean(), true, detail::kMainT),
    };
  }();
  return tables;
}

/// Throws UnknownTable for an unregistered id.
inline const TableSpec& find_table(const std::string& id) {
  for (const auto& t : table_registry())
    if (t.id == id) return t;
  throw UnknownTable("no table '" + id + "'");
}

/// Single (N, T) cell of a registered table.
inline ScenarioConfig table_cell(const std::string& id, Index n, Index t) {
  return find_table(id).grid.base.with_cell(n, t);
}

}  // namespace panel_msfe

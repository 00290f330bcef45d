#pragma once

// Numerical core. Config-file support lives in panel_msfe/config.hpp and
// needs yaml-cpp.

#include "panel_msfe/cov_operator.hpp"
#include "panel_msfe/error.hpp"
#include "panel_msfe/inference.hpp"
#include "panel_msfe/normal.hpp"
#include "panel_msfe/oracle.hpp"
#include "panel_msfe/panel.hpp"
#include "panel_msfe/panel_csv.hpp"
#include "panel_msfe/rng.hpp"
#include "panel_msfe/sigma.hpp"
#include "panel_msfe/simulation.hpp"
#include "panel_msfe/table_registry.hpp"
#include "panel_msfe/variance_terms.hpp"

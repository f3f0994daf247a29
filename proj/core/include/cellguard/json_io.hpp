#pragma once

// JSON and CSV serialization of estimates, filter audits, tuning tables,
// simulation and diagnostic reports. Keys keep insertion order so output
// bytes are stable. Non-finite numbers are written as null.

#include "cellguard/diagnostics.hpp"
#include "cellguard/estimators.hpp"
#include "cellguard/filter.hpp"
#include "cellguard/robust_scale.hpp"
#include "cellguard/simulation.hpp"

#include <nlohmann/json.hpp>

#include <ostream>

namespace cellguard {

using Json = nlohmann::ordered_json;

Json to_json(const Estimate& est);
/// Accepts the output of to_json(Estimate) or any object with "mu" and
/// "sigma". Throws ParseError on a malformed document.
Estimate estimate_from_json(const Json& j);

Json to_json(const FilterResult& fr);

Json to_json(const TuningTable& table);
TuningTable tuning_table_from_json(const Json& j);

Json to_json(const SimConfig& cfg);
Json to_json(const SimReport& report);
/// One row per estimator x model x eps x k.
void write_sim_csv(std::ostream& out, const SimReport& report);

Json to_json(const DiagReport& report);
/// Flagged cells as row,col,value,distance.
void write_diag_cells_csv(std::ostream& out, const DiagReport& report, const DataMatrix& x,
                          const Estimate& est);

}  // namespace cellguard

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "propdet/evaluation.hpp"

namespace propdet {

struct ReportOptions {
    // Wall-clock runtime is the only nondeterministic field; it is left out
    // unless asked for so equal configs give byte-identical files.
    bool include_timing = false;
};

nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json cell_to_json(const EvalCell& c, const ReportOptions& opt = {});

// All emitters sort a copy of the cells first.
std::string report_csv(const EvalReport& r, const ReportOptions& opt = {});
std::string report_json(const EvalReport& r, const ReportOptions& opt = {});
// Tables in per-mille: one block per (mode, method, features, pn, sweep),
// rows = training set, columns = test set, entries "P R F".
std::string report_grid(const EvalReport& r);
// Plot-ready sweep table for cells whose sweep key starts with `param`
// ("over_rate", "under_fraction", "loss", ...).
std::string sweep_tsv(const EvalReport& r, const std::string& param);
// Distinct sweep parameter names present in the report.
std::vector<std::string> sweep_params(const EvalReport& r);

// Writes <stem>.csv, <stem>.json, <stem>.txt and one <stem>_<param>.tsv per
// sweep parameter. Returns the written paths.
std::vector<std::filesystem::path> write_report(const EvalReport& r, const std::filesystem::path& dir,
                                                const std::string& stem, const ReportOptions& opt = {});

int per_mille(double x);

}  // namespace propdet

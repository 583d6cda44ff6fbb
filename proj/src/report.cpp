#include "propdet/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "propdet/errors.hpp"

namespace propdet {

using nlohmann::json;

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string tsv_field(std::string s) {
    for (char& c : s)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    return s;
}

EvalReport sorted(const EvalReport& r) {
    EvalReport copy = r;
    copy.sort_cells();
    return copy;
}

std::pair<std::string, std::string> split_sweep(const std::string& sweep) {
    const auto eq = sweep.find('=');
    if (eq == std::string::npos) return {"sampling", sweep};
    return {sweep.substr(0, eq), sweep.substr(eq + 1)};
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    out << content;
    if (!out) throw DataError("write failed for " + p.string());
}

}  // namespace

int per_mille(double x) { return static_cast<int>(std::lround(x * 1000.0)); }

json metrics_to_json(const Metrics& m) {
    return {{"tp", m.tp},
            {"fp", m.fp},
            {"fn", m.fn},
            {"tn", m.tn},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1}};
}

json cell_to_json(const EvalCell& c, const ReportOptions& opt) {
    json j{{"mode", c.mode},
           {"train", c.train_dataset},
           {"test", c.test_dataset},
           {"method", to_string(c.method)},
           {"features", c.feature_group},
           {"pn_removed", c.pn_removed},
           {"sweep", c.sweep},
           {"seed", c.seed},
           {"metrics", metrics_to_json(c.metrics)},
           {"metadata", c.metadata}};
    if (!c.folds.empty()) {
        json folds = json::array();
        for (const auto& f : c.folds) folds.push_back(metrics_to_json(f));
        j["folds"] = std::move(folds);
    }
    if (!c.error.empty()) j["error"] = c.error;
    if (opt.include_timing) j["runtime_seconds"] = c.runtime_seconds;
    return j;
}

std::string report_csv(const EvalReport& r, const ReportOptions& opt) {
    const EvalReport s = sorted(r);
    std::ostringstream out;
    out << "mode,train,test,method,features,pn_removed,sweep,seed,tp,fp,fn,tn,precision,recall,f1,error";
    if (opt.include_timing) out << ",runtime_seconds";
    out << '\n';
    for (const auto& c : s.cells) {
        const auto& m = c.metrics;
        out << csv_field(c.mode) << ',' << csv_field(c.train_dataset) << ',' << csv_field(c.test_dataset) << ','
            << to_string(c.method) << ',' << csv_field(c.feature_group) << ',' << (c.pn_removed ? "true" : "false")
            << ',' << csv_field(c.sweep) << ',' << c.seed << ',' << m.tp << ',' << m.fp << ',' << m.fn << ','
            << m.tn << ',' << fixed6(m.precision) << ',' << fixed6(m.recall) << ',' << fixed6(m.f1) << ','
            << csv_field(c.error);
        if (opt.include_timing) out << ',' << fixed6(c.runtime_seconds);
        out << '\n';
    }
    return out.str();
}

std::string report_json(const EvalReport& r, const ReportOptions& opt) {
    const EvalReport s = sorted(r);
    json cells = json::array();
    for (const auto& c : s.cells) cells.push_back(cell_to_json(c, opt));
    json j{{"format_version", 1}, {"context", s.context}, {"cells", std::move(cells)}};
    return j.dump(2) + "\n";
}

std::string report_grid(const EvalReport& r) {
    const EvalReport s = sorted(r);
    using BlockKey = std::tuple<std::string, std::string, std::string, bool, std::string>;
    std::map<BlockKey, std::vector<const EvalCell*>> blocks;
    for (const auto& c : s.cells)
        blocks[{c.mode, to_string(c.method), c.feature_group, c.pn_removed, c.sweep}].push_back(&c);

    std::ostringstream out;
    bool first = true;
    for (const auto& [key, cells] : blocks) {
        const auto& [mode, method, features, pn, sweep] = key;
        if (!first) out << '\n';
        first = false;
        out << "# " << mode << "  method=" << method << "  features=" << features
            << "  pn_removed=" << (pn ? "yes" : "no");
        if (!sweep.empty()) out << "  " << sweep;
        out << "  (P R F in per-mille)\n";

        std::set<std::string> rows, cols;
        std::map<std::pair<std::string, std::string>, const EvalCell*> at;
        for (const auto* c : cells) {
            rows.insert(c->train_dataset);
            cols.insert(c->test_dataset);
            at[{c->train_dataset, c->test_dataset}] = c;
        }
        std::size_t w0 = 5;
        for (const auto& row : rows) w0 = std::max(w0, row.size());
        std::size_t wc = 14;
        for (const auto& col : cols) wc = std::max(wc, col.size());

        char buf[64];
        out << std::string(w0, ' ');
        for (const auto& col : cols) out << "  " << std::string(wc - col.size(), ' ') << col;
        out << '\n';
        for (const auto& row : rows) {
            out << row << std::string(w0 - row.size(), ' ');
            for (const auto& col : cols) {
                const auto it = at.find({row, col});
                std::string v;
                if (it == at.end()) {
                    v = "-";
                } else if (!it->second->error.empty()) {
                    v = "ERR";
                } else {
                    const auto& m = it->second->metrics;
                    std::snprintf(buf, sizeof buf, "%4d %4d %4d", per_mille(m.precision), per_mille(m.recall),
                                  per_mille(m.f1));
                    v = buf;
                }
                out << "  " << std::string(wc - std::min(wc, v.size()), ' ') << v;
            }
            out << '\n';
        }
    }
    return out.str();
}

std::vector<std::string> sweep_params(const EvalReport& r) {
    std::set<std::string> names;
    for (const auto& c : r.cells)
        if (!c.sweep.empty()) names.insert(split_sweep(c.sweep).first);
    return {names.begin(), names.end()};
}

std::string sweep_tsv(const EvalReport& r, const std::string& param) {
    const EvalReport s = sorted(r);
    std::ostringstream out;
    out << param << "\ttrain\ttest\tmethod\tseed\tprecision\trecall\tf1\tpair_count\terror\n";
    // Numeric parameter values sort numerically for plotting.
    std::vector<std::pair<std::string, const EvalCell*>> rows;
    for (const auto& c : s.cells) {
        if (c.sweep.empty()) continue;
        auto [name, value] = split_sweep(c.sweep);
        if (name == param) rows.emplace_back(value, &c);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        char* ea = nullptr;
        char* eb = nullptr;
        const double da = std::strtod(a.first.c_str(), &ea), db = std::strtod(b.first.c_str(), &eb);
        const bool na = *ea == '\0' && !a.first.empty(), nb = *eb == '\0' && !b.first.empty();
        if (na && nb && da != db) return da < db;
        if (na != nb) return na;
        if (!(na && nb) && a.first != b.first) return a.first < b.first;
        return a.second->test_dataset < b.second->test_dataset;
    });
    for (const auto& [value, c] : rows) {
        const auto pc = c->metadata.find("pair_count");
        out << tsv_field(value) << '\t' << tsv_field(c->train_dataset) << '\t' << tsv_field(c->test_dataset) << '\t'
            << to_string(c->method) << '\t' << c->seed << '\t' << fixed6(c->metrics.precision) << '\t'
            << fixed6(c->metrics.recall) << '\t' << fixed6(c->metrics.f1) << '\t'
            << (pc != c->metadata.end() ? pc->dump() : std::string("-")) << '\t' << tsv_field(c->error) << '\n';
    }
    return out.str();
}

std::vector<std::filesystem::path> write_report(const EvalReport& r, const std::filesystem::path& dir,
                                                const std::string& stem, const ReportOptions& opt) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const std::string& content) {
        const auto p = dir / name;
        write_file(p, content);
        written.push_back(p);
    };
    emit(stem + ".csv", report_csv(r, opt));
    emit(stem + ".json", report_json(r, opt));
    emit(stem + ".txt", report_grid(r));
    for (const auto& param : sweep_params(r)) emit(stem + "_" + param + ".tsv", sweep_tsv(r, param));
    return written;
}

}  // namespace propdet

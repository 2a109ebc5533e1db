#include "recurate/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "recurate/csv.hpp"
#include "recurate/errors.hpp"

namespace recurate {

namespace {

bool parse_bool(const std::string& raw, const std::string& context) {
    if (raw == "0" || raw == "false" || raw == "FALSE" || raw == "False") return false;
    if (raw == "1" || raw == "true" || raw == "TRUE" || raw == "True") return true;
    throw DataError(context + ": cannot parse '" + raw + "' as boolean (use 0/1 or true/false)");
}

bool parses_as_double(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    (void)v;
    return end == s.c_str() + s.size();
}

}  // namespace

std::vector<ValidationIssue> validate(const std::vector<SubjectRecord>& records) {
    std::vector<ValidationIssue> issues;
    std::set<std::string> seen;
    for (const auto& r : records) {
        auto flag = [&](std::string msg) { issues.push_back({r.id, std::move(msg)}); };
        if (!seen.insert(r.id).second) flag("duplicate subject id");
        auto bad_time = [](double t) { return !std::isfinite(t) || t < 0.0; };
        if (!std::isfinite(r.end_time) || r.end_time <= 0.0)
            flag("end_time must be finite and positive");
        if (bad_time(r.switch_time)) flag("switch_time must be finite and nonnegative");
        if (r.switch_time > r.end_time) flag("switch_time exceeds end_time");
        if (!r.switched && r.switch_time != r.end_time)
            flag("unswitched subject must carry switch_time equal to end_time");
        // A switch at exactly end_time is not an observed switch (the tie
        // resolves to unswitched); strictly-before is required.
        if (r.switched && r.switch_time >= r.end_time)
            flag("switch at or after end of followup cannot be an observed switch");
        for (std::size_t j = 0; j < r.event_times.size(); ++j) {
            const double v = r.event_times[j];
            if (bad_time(v)) {
                flag("event time must be finite and nonnegative");
                break;
            }
            if (j > 0 && v < r.event_times[j - 1]) {
                flag("event times not sorted nondecreasing");
                break;
            }
            if (v >= r.end_time) {
                flag("event not strictly before end of followup");
                break;
            }
        }
        for (double c : r.covariates) {
            if (!std::isfinite(c)) {
                flag("covariate value not finite");
                break;
            }
        }
    }
    return issues;
}

long PanelGrid::at_risk(int k) const {
    long count = 0;
    for (const auto& s : subjects) count += s.n_rows() >= k ? 1 : 0;
    return count;
}

long PanelGrid::deaths_at(int k) const {
    long count = 0;
    for (const auto& s : subjects) count += (s.exit == ExitKind::death && s.exit_interval == k) ? 1 : 0;
    return count;
}

long PanelGrid::censored_at(int k) const {
    long count = 0;
    for (const auto& s : subjects)
        count += (s.exit == ExitKind::censoring && s.exit_interval == k) ? 1 : 0;
    return count;
}

PanelGrid discretize(const CohortData& cohort, int K, double tau) {
    if (K < 2) throw ConfigError("interval count K must be at least 2");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("followup length tau must be positive and finite");
    if (auto issues = validate(cohort.records); !issues.empty()) {
        std::ostringstream msg;
        msg << "invalid subject records:";
        std::size_t shown = 0;
        for (const auto& issue : issues) {
            if (shown == 5) {
                msg << " ... (" << issues.size() << " issues total)";
                break;
            }
            msg << " [" << issue.subject_id << "] " << issue.message << ";";
            ++shown;
        }
        throw DataError(msg.str());
    }

    std::vector<double> bounds(static_cast<std::size_t>(K) + 1);
    for (int k = 0; k <= K; ++k) bounds[static_cast<std::size_t>(k)] = tau * k / K;

    PanelGrid grid;
    grid.K = K;
    grid.tau = tau;
    grid.covariate_names = cohort.covariate_names;
    const std::size_t n = cohort.records.size();
    const std::size_t p = cohort.covariate_names.size();
    grid.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    grid.subjects.reserve(n);

    for (std::size_t i = 0; i < n; ++i) {
        const SubjectRecord& rec = cohort.records[i];
        if (rec.covariates.size() != p)
            throw DataError("subject " + rec.id + ": expected " + std::to_string(p) +
                            " covariates, got " + std::to_string(rec.covariates.size()));
        for (std::size_t j = 0; j < p; ++j)
            grid.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rec.covariates[j];

        // Followup is truncated at tau; an exit at or beyond the last
        // boundary never fires inside the grid.
        const double eff_end = std::min(rec.end_time, tau);
        int exit_k = K + 1;
        for (int k = 1; k <= K; ++k) {
            if (bounds[static_cast<std::size_t>(k) - 1] >= eff_end) {
                exit_k = k;
                break;
            }
        }

        std::vector<long> counts(static_cast<std::size_t>(K) + 1, 0);
        for (double v : rec.event_times) {
            if (v >= tau) continue;  // outside the analysis window
            const auto it = std::upper_bound(bounds.begin(), bounds.end(), v);
            const auto k = static_cast<std::size_t>(it - bounds.begin());
            counts[k] += 1;
        }

        SubjectPanel sp;
        sp.id = rec.id;
        const int last_row = std::min(exit_k - 1, K);
        sp.rows.reserve(static_cast<std::size_t>(last_row));
        for (int k = 1; k <= last_row; ++k) {
            sp.rows.push_back({k, (rec.switched && rec.switch_time <= bounds[static_cast<std::size_t>(k)]) ? 1 : 0,
                               counts[static_cast<std::size_t>(k)]});
        }
        for (int k = last_row + 1; k <= K; ++k) {
            if (counts[static_cast<std::size_t>(k)] != 0)
                throw DataError("subject " + rec.id + ": event recorded after end of followup");
        }
        if (exit_k <= K) {
            sp.exit = rec.died ? ExitKind::death : ExitKind::censoring;
            sp.exit_interval = exit_k;
            sp.exit_a = (rec.switched && rec.switch_time <= bounds[static_cast<std::size_t>(exit_k)]) ? 1 : 0;
        }
        grid.subjects.push_back(std::move(sp));
    }
    return grid;
}

CohortData load_cohort(const std::filesystem::path& subjects_csv,
                       const std::filesystem::path& events_csv) {
    const CsvTable subjects = read_csv(subjects_csv);
    const std::size_t col_id = subjects.column("id");
    const std::size_t col_switch_time = subjects.column("switch_time");
    const std::size_t col_switched = subjects.column("switched");
    const std::size_t col_end_time = subjects.column("end_time");
    const std::size_t col_died = subjects.column("died");
    const std::set<std::size_t> reserved = {col_id, col_switch_time, col_switched, col_end_time, col_died};

    std::vector<std::size_t> covariate_cols;
    for (std::size_t c = 0; c < subjects.header.size(); ++c)
        if (!reserved.count(c)) covariate_cols.push_back(c);

    // A covariate column is numeric iff every cell parses as a double;
    // otherwise it is categorical and gets one-hot expanded below.
    std::vector<bool> is_numeric(covariate_cols.size(), true);
    std::vector<std::vector<std::string>> levels(covariate_cols.size());
    for (std::size_t j = 0; j < covariate_cols.size(); ++j) {
        const std::size_t c = covariate_cols[j];
        std::set<std::string> uniq;
        for (const auto& row : subjects.rows) {
            if (!parses_as_double(row[c])) is_numeric[j] = false;
            uniq.insert(row[c]);
        }
        if (!is_numeric[j]) levels[j].assign(uniq.begin(), uniq.end());
    }

    CohortData out;
    for (std::size_t j = 0; j < covariate_cols.size(); ++j) {
        const std::string& name = subjects.header[covariate_cols[j]];
        if (is_numeric[j]) {
            out.covariate_names.push_back(name);
        } else {
            for (std::size_t lv = 1; lv < levels[j].size(); ++lv)  // first level is the reference
                out.covariate_names.push_back(name + "=" + levels[j][lv]);
        }
    }

    std::unordered_map<std::string, std::size_t> index_of;
    out.records.reserve(subjects.rows.size());
    for (const auto& row : subjects.rows) {
        SubjectRecord rec;
        rec.id = row[col_id];
        const std::string ctx = subjects_csv.string() + " subject " + rec.id;
        rec.switch_time = parse_double(row[col_switch_time], ctx + " switch_time");
        rec.switched = parse_bool(row[col_switched], ctx + " switched");
        rec.end_time = parse_double(row[col_end_time], ctx + " end_time");
        rec.died = parse_bool(row[col_died], ctx + " died");
        for (std::size_t j = 0; j < covariate_cols.size(); ++j) {
            const std::string& cell = row[covariate_cols[j]];
            if (is_numeric[j]) {
                rec.covariates.push_back(parse_double(cell, ctx + " " + subjects.header[covariate_cols[j]]));
            } else {
                for (std::size_t lv = 1; lv < levels[j].size(); ++lv)
                    rec.covariates.push_back(cell == levels[j][lv] ? 1.0 : 0.0);
            }
        }
        if (index_of.count(rec.id)) throw DataError(ctx + ": duplicate subject id");
        index_of[rec.id] = out.records.size();
        out.records.push_back(std::move(rec));
    }

    const CsvTable events = read_csv(events_csv);
    const std::size_t ev_id = events.column("id");
    const std::size_t ev_time = events.column("event_time");
    for (const auto& row : events.rows) {
        const auto it = index_of.find(row[ev_id]);
        if (it == index_of.end())
            throw DataError(events_csv.string() + ": event for unknown subject id '" + row[ev_id] + "'");
        out.records[it->second].event_times.push_back(
            parse_double(row[ev_time], events_csv.string() + " subject " + row[ev_id] + " event_time"));
    }
    for (auto& rec : out.records) std::sort(rec.event_times.begin(), rec.event_times.end());
    return out;
}

void write_panel_csv(const PanelGrid& grid, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& s : grid.subjects) {
        for (const auto& r : s.rows) {
            rows.push_back({s.id, std::to_string(r.k), "0", "0", std::to_string(r.a), std::to_string(r.y)});
        }
        if (s.exit != ExitKind::none) {
            const bool death = s.exit == ExitKind::death;
            rows.push_back({s.id, std::to_string(s.exit_interval), death ? "1" : "0", death ? "0" : "1",
                            std::to_string(s.exit_a), "0"});
        }
    }
    write_csv(path, {"id", "k", "T", "C", "A", "Y"}, rows);
}

void write_cohort_csv(const CohortData& cohort, const std::filesystem::path& subjects_csv,
                      const std::filesystem::path& events_csv) {
    std::vector<std::string> header = {"id"};
    header.insert(header.end(), cohort.covariate_names.begin(), cohort.covariate_names.end());
    header.insert(header.end(), {"switch_time", "switched", "end_time", "died"});
    std::vector<std::vector<std::string>> rows;
    std::vector<std::vector<std::string>> event_rows;
    rows.reserve(cohort.records.size());
    for (const SubjectRecord& rec : cohort.records) {
        if (rec.covariates.size() != cohort.covariate_names.size())
            throw DataError("subject " + rec.id + " covariate count does not match the header");
        std::vector<std::string> row = {rec.id};
        for (double v : rec.covariates) row.push_back(format_double(v));
        row.push_back(format_double(rec.switch_time));
        row.push_back(rec.switched ? "1" : "0");
        row.push_back(format_double(rec.end_time));
        row.push_back(rec.died ? "1" : "0");
        rows.push_back(std::move(row));
        for (double t : rec.event_times) event_rows.push_back({rec.id, format_double(t)});
    }
    write_csv(subjects_csv, header, rows);
    write_csv(events_csv, {"id", "event_time"}, event_rows);
}

}  // namespace recurate

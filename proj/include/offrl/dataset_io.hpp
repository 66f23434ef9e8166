#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "offrl/error.hpp"
#include "offrl/trajectory.hpp"

namespace offrl {

/// Column mapping for CSV ingestion. Files are UTF-8 with a mandatory header row.
/// Term granularity: one row per term carrying either the 10 feature columns or,
/// when `state` is set, a precomputed discrete state id.
/// Course granularity: one row per course; rows sharing (episode, step) are
/// aggregated into one term with aggregate_term.
struct CsvSchema {
    enum class Granularity { Term, Course };

    Granularity granularity = Granularity::Term;
    std::string episode = "episode";
    std::string step = "step";
    std::string action = "action";
    std::string terminal = "terminal";
    std::string success = "success";
    std::array<std::string, kFeatureDim> features = [] {
        std::array<std::string, kFeatureDim> names;
        for (std::size_t i = 0; i < kFeatureDim; ++i) names[i] = kFeatureNames[i];
        return names;
    }();
    std::string state;  // empty: use features

    // course granularity
    std::string program_hours = "program_hours";
    std::string suggested_terms = "suggested_terms";
    std::string max_terms = "max_terms";
    std::string grade = "grade";
    std::string course_hours = "course_hours";
    std::string absences = "absences";

    static CsvSchema from_json(const nlohmann::json& j) {
        CsvSchema s;
        for (const auto& [key, value] : j.items()) {
            if (key == "granularity") {
                const auto g = value.get<std::string>();
                OFFRL_REQUIRE(g == "term" || g == "course", ConfigError, "schema.granularity must be term|course");
                s.granularity = g == "term" ? Granularity::Term : Granularity::Course;
            } else if (key == "episode") s.episode = value.get<std::string>();
            else if (key == "step") s.step = value.get<std::string>();
            else if (key == "action") s.action = value.get<std::string>();
            else if (key == "terminal") s.terminal = value.get<std::string>();
            else if (key == "success") s.success = value.get<std::string>();
            else if (key == "state") s.state = value.get<std::string>();
            else if (key == "features") {
                const auto names = value.get<std::vector<std::string>>();
                OFFRL_REQUIRE(names.size() == kFeatureDim, ConfigError, "schema.features needs exactly 10 names");
                std::copy(names.begin(), names.end(), s.features.begin());
            } else if (key == "program_hours") s.program_hours = value.get<std::string>();
            else if (key == "suggested_terms") s.suggested_terms = value.get<std::string>();
            else if (key == "max_terms") s.max_terms = value.get<std::string>();
            else if (key == "grade") s.grade = value.get<std::string>();
            else if (key == "course_hours") s.course_hours = value.get<std::string>();
            else if (key == "absences") s.absences = value.get<std::string>();
            else throw ConfigError("unknown schema key '" + key + "'");
        }
        return s;
    }
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '"')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '"' || field.back() == '\r'))
            field.remove_suffix(1);
        out.push_back(field);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s, std::size_t row, const std::string& col) {
    double v = 0.0;
    if (s.size() > 0 && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ParseError("row " + std::to_string(row) + ", column '" + col + "': non-finite or unparsable value '" +
                         std::string(s) + "'");
    return v;
}

inline long parse_int(std::string_view s, std::size_t row, const std::string& col) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError("row " + std::to_string(row) + ", column '" + col + "': expected integer, got '" +
                         std::string(s) + "'");
    return v;
}

inline bool parse_bool(std::string_view s, std::size_t row, const std::string& col) {
    if (s == "1" || s == "true" || s == "True" || s == "TRUE") return true;
    if (s == "0" || s == "false" || s == "False" || s == "FALSE") return false;
    throw ParseError("row " + std::to_string(row) + ", column '" + col + "': expected boolean, got '" +
                     std::string(s) + "'");
}

struct RawRow {
    std::size_t row = 0;
    long step = 0;
    int action = 0;
    bool terminal = false;
    bool success = false;
    int state = kAbsorbing;
    StateFeatures features{};
    ProgramConstants program{};
    CourseRecord course{};
};

}  // namespace detail

/// Parses a dataset from CSV text. Rows of an episode may appear in any order;
/// they are grouped by episode id (first-appearance order) and sorted by step.
inline Dataset parse_csv(std::istream& in, const CsvSchema& schema) {
    std::string line;
    OFFRL_REQUIRE(static_cast<bool>(std::getline(in, line)), SchemaError, "missing header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = detail::split_csv_line(line);
    std::unordered_map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < header.size(); ++i) col_index[std::string(header[i])] = i;
    auto column = [&](const std::string& name) {
        auto it = col_index.find(name);
        if (it == col_index.end()) throw SchemaError("missing column '" + name + "'");
        return it->second;
    };

    const bool by_course = schema.granularity == CsvSchema::Granularity::Course;
    const bool discrete = !schema.state.empty();
    const std::size_t c_ep = column(schema.episode), c_step = column(schema.step), c_act = column(schema.action),
                      c_term = column(schema.terminal), c_succ = column(schema.success);
    std::array<std::size_t, kFeatureDim> c_feat{};
    std::size_t c_state = 0, c_ph = 0, c_st = 0, c_mt = 0, c_gr = 0, c_ch = 0, c_ab = 0;
    if (by_course) {
        c_ph = column(schema.program_hours);
        c_st = column(schema.suggested_terms);
        c_mt = column(schema.max_terms);
        c_gr = column(schema.grade);
        c_ch = column(schema.course_hours);
        c_ab = column(schema.absences);
    } else if (discrete) {
        c_state = column(schema.state);
    } else {
        for (std::size_t i = 0; i < kFeatureDim; ++i) c_feat[i] = column(schema.features[i]);
    }

    std::vector<std::string> episode_order;
    std::unordered_map<std::string, std::vector<detail::RawRow>> rows_by_episode;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        OFFRL_REQUIRE(f.size() >= header.size(), ParseError,
                      "row " + std::to_string(row_no) + " has " + std::to_string(f.size()) + " fields, header has " +
                          std::to_string(header.size()));
        detail::RawRow r;
        r.row = row_no;
        r.step = detail::parse_int(f[c_step], row_no, schema.step);
        r.action = static_cast<int>(detail::parse_int(f[c_act], row_no, schema.action));
        OFFRL_REQUIRE(r.action >= 0, ParseError, "row " + std::to_string(row_no) + ": negative action");
        r.terminal = detail::parse_bool(f[c_term], row_no, schema.terminal);
        r.success = detail::parse_bool(f[c_succ], row_no, schema.success);
        if (by_course) {
            r.program = {detail::parse_double(f[c_ph], row_no, schema.program_hours),
                         detail::parse_double(f[c_st], row_no, schema.suggested_terms),
                         detail::parse_double(f[c_mt], row_no, schema.max_terms)};
            r.course = {detail::parse_double(f[c_gr], row_no, schema.grade),
                        detail::parse_double(f[c_ch], row_no, schema.course_hours),
                        detail::parse_double(f[c_ab], row_no, schema.absences)};
        } else if (discrete) {
            r.state = static_cast<int>(detail::parse_int(f[c_state], row_no, schema.state));
            OFFRL_REQUIRE(r.state >= 0, ParseError, "row " + std::to_string(row_no) + ": negative state id");
        } else {
            for (std::size_t i = 0; i < kFeatureDim; ++i)
                r.features[i] = detail::parse_double(f[c_feat[i]], row_no, schema.features[i]);
        }
        const std::string ep(f[c_ep]);
        auto [it, inserted] = rows_by_episode.try_emplace(ep);
        if (inserted) episode_order.push_back(ep);
        it->second.push_back(r);
    }

    Dataset ds;
    for (const auto& ep : episode_order) {
        auto& rows = rows_by_episode[ep];
        std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
        Trajectory traj;
        traj.id = ep;
        std::size_t i = 0;
        long expected_step = rows.front().step;
        while (i < rows.size()) {
            std::size_t j = i + 1;
            if (by_course)
                while (j < rows.size() && rows[j].step == rows[i].step) ++j;
            if (rows[i].step != expected_step)
                throw MalformedEpisodeError("episode '" + ep + "' has " +
                                            (rows[i].step < expected_step ? "duplicate" : "non-contiguous") +
                                            " step index " + std::to_string(rows[i].step));
            ++expected_step;
            Transition tr;
            tr.action = rows[i].action;
            tr.terminal = rows[i].terminal;
            tr.success = rows[i].success;
            if (by_course) {
                std::vector<CourseRecord> courses;
                for (std::size_t k = i; k < j; ++k) {
                    if (rows[k].action != tr.action || rows[k].terminal != tr.terminal || rows[k].success != tr.success)
                        throw MalformedEpisodeError("episode '" + ep + "' term " + std::to_string(rows[i].step) +
                                                    " has conflicting action/terminal/success across course rows");
                    courses.push_back(rows[k].course);
                }
                tr.features = aggregate_term(courses, rows[i].program);
            } else if (discrete) {
                tr.state = rows[i].state;
            } else {
                tr.features = rows[i].features;
            }
            tr.reward = sparse_reward(tr.terminal, tr.success);
            traj.steps.push_back(tr);
            i = j;
        }
        for (std::size_t t = 0; t < traj.steps.size(); ++t)
            traj.steps[t].next_state = t + 1 < traj.steps.size() ? traj.steps[t + 1].state : kAbsorbing;
        validate(traj);
        ds.trajectories.push_back(std::move(traj));
    }
    OFFRL_REQUIRE(ds.n() >= 1, InsufficientDataError, "CSV contains no data rows");
    return ds;
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    OFFRL_REQUIRE(in.good(), DataError, "cannot open '" + path + "'");
    return parse_csv(in, schema);
}

inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

/// Writes term-granularity CSV with the default column names. Feature columns are
/// emitted when every transition carries features, the `state` column when every
/// transition is discretized; both when both hold.
inline void write_csv(std::ostream& out, const Dataset& ds) {
    bool all_features = true, all_states = true;
    for (const auto& t : ds.trajectories)
        for (const auto& s : t.steps) {
            all_features = all_features && s.features.has_value();
            all_states = all_states && s.state >= 0;
        }
    out << "episode,step";
    if (all_states) out << ",state";
    if (all_features)
        for (auto name : kFeatureNames) out << ',' << name;
    out << ",action,terminal,success\n";
    for (const auto& t : ds.trajectories)
        for (std::size_t k = 0; k < t.steps.size(); ++k) {
            const auto& s = t.steps[k];
            out << t.id << ',' << k;
            if (all_states) out << ',' << s.state;
            if (all_features)
                for (double v : *s.features) out << ',' << format_double(v);
            out << ',' << s.action << ',' << (s.terminal ? 1 : 0) << ',' << (s.success ? 1 : 0) << '\n';
        }
}

// ---------------------------------------------------------------------------
// Line-delimited dataset records. Line 1 is a header object carrying the
// format tag and version; every further line is one transition.

inline constexpr int kDatasetFormatVersion = 1;

inline void save_jsonl(std::ostream& out, const Dataset& ds) {
    nlohmann::json header = {{"format", "offrl-dataset"}, {"version", kDatasetFormatVersion},
                             {"trajectories", ds.n()}, {"transitions", ds.m()}};
    out << header.dump() << '\n';
    for (const auto& t : ds.trajectories)
        for (std::size_t k = 0; k < t.steps.size(); ++k) {
            const auto& s = t.steps[k];
            nlohmann::json rec = {{"episode", t.id}, {"step", k},      {"state", s.state},
                                  {"action", s.action}, {"reward", s.reward}, {"next_state", s.next_state},
                                  {"terminal", s.terminal}, {"success", s.success}};
            if (s.features) rec["features"] = *s.features;
            out << rec.dump() << '\n';
        }
}

inline Dataset load_jsonl(std::istream& in) {
    std::string line;
    OFFRL_REQUIRE(static_cast<bool>(std::getline(in, line)), ParseError, "empty dataset file");
    const auto header = nlohmann::json::parse(line);
    OFFRL_REQUIRE(header.value("format", "") == "offrl-dataset", ParseError, "not an offrl dataset file");
    OFFRL_REQUIRE(header.value("version", 0) == kDatasetFormatVersion, ParseError,
                  "unsupported dataset version " + std::to_string(header.value("version", 0)));
    Dataset ds;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        const auto ep = rec.at("episode").get<std::string>();
        if (ds.trajectories.empty() || ds.trajectories.back().id != ep) {
            if (!ds.trajectories.empty()) validate(ds.trajectories.back());
            ds.trajectories.push_back(Trajectory{ep, {}});
        }
        auto& traj = ds.trajectories.back();
        OFFRL_REQUIRE(rec.at("step").get<std::size_t>() == traj.steps.size(), MalformedEpisodeError,
                      "episode '" + ep + "' has non-contiguous step at line " + std::to_string(row));
        Transition tr;
        tr.state = rec.at("state").get<int>();
        tr.action = rec.at("action").get<int>();
        tr.reward = rec.at("reward").get<double>();
        tr.next_state = rec.at("next_state").get<int>();
        tr.terminal = rec.at("terminal").get<bool>();
        tr.success = rec.at("success").get<bool>();
        if (rec.contains("features")) tr.features = rec.at("features").get<StateFeatures>();
        traj.steps.push_back(tr);
    }
    validate(ds);
    return ds;
}

inline void save_jsonl(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    OFFRL_REQUIRE(out.good(), DataError, "cannot write '" + path + "'");
    save_jsonl(out, ds);
}

inline Dataset load_jsonl(const std::string& path) {
    std::ifstream in(path);
    OFFRL_REQUIRE(in.good(), DataError, "cannot open '" + path + "'");
    return load_jsonl(in);
}

}  // namespace offrl

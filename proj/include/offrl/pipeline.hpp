#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "offrl/dataset_io.hpp"
#include "offrl/discretize.hpp"
#include "offrl/empirical_mdp.hpp"
#include "offrl/ope.hpp"
#include "offrl/optics.hpp"
#include "offrl/pca.hpp"
#include "offrl/student.hpp"
#include "offrl/synthetic.hpp"
#include "offrl/trainer.hpp"

namespace offrl {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

struct DiscretizeConfig {
    ClusterMethod method = ClusterMethod::XMeans;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    int k_max = 12;  // xmeans
    int k = 8;       // kmeans
    int min_pts = 10;
    double xi = 0.05;
    double max_eps = std::numeric_limits<double>::infinity();  // optics; unbounded
    bool standardize = true;
};

struct OpeConfig {
    std::vector<ReturnLength> lengths = MagicOptions{}.lengths;
    int bootstrap_resamples = 200;
    double epsilon = 0.05;
    double alpha = 0.5;
    bool strict_swdr = false;
    bool literal_interval = false;
    std::string policy = "learned";  // or "behavior"
};

struct BenchmarkConfig {
    std::string spec = "standard_mdp.json";
    std::string eval_policy = "standard_eval_policy.json";
    std::vector<std::size_t> sizes = {1000, 4000, 16000};
    int seeds = 10;
    std::uint64_t seed = 0;
};

struct GenerateConfig {
    std::size_t students = 1342;
    std::uint64_t seed = 0;
    std::uint64_t world_seed = 1;
    int horizon = 20;
};

struct ReportConfig {
    bool cluster_points = true;
};

struct PipelineConfig {
    fs::path base_dir = ".";  // relative paths resolve against the config file's directory
    std::string input;
    std::string format = "csv";  // csv | jsonl
    CsvSchema schema;
    std::string output_dir = "offrl_out";
    double eval_fraction = 0.2;
    DiscretizeConfig discretize;
    TrainConfig train;
    long checkpoint_every = 0;  // steps; 0 writes one checkpoint at the end
    bool resume = true;
    OpeConfig ope;
    BenchmarkConfig benchmark;
    GenerateConfig generate;
    ReportConfig report;

    fs::path resolve(const std::string& p) const {
        const fs::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }
    fs::path out() const { return resolve(output_dir); }
};

namespace detail {

// Reads the keys of one JSON object; any key not read is an error.
class Section {
public:
    Section(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        OFFRL_REQUIRE(j_.is_object(), ConfigError, "'" + where_ + "' must be an object");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("bad value for '" + name(key) + "': " + e.what());
        }
    }

    std::optional<Section> section(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) return std::nullopt;
        return Section(j_.at(key), name(key));
    }

    const nlohmann::json* raw(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string name(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            OFFRL_REQUIRE(seen_.count(key), ConfigError, "unknown key '" + name(key) + "'");
    }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

inline ClusterMethod parse_method(const std::string& s) {
    if (s == "xmeans") return ClusterMethod::XMeans;
    if (s == "optics") return ClusterMethod::Optics;
    if (s == "kmeans") return ClusterMethod::KMeans;
    throw ConfigError("discretize.method must be xmeans|optics|kmeans, got '" + s + "'");
}

inline std::vector<ReturnLength> parse_lengths(const nlohmann::json& j) {
    OFFRL_REQUIRE(j.is_array(), ConfigError, "ope.lengths must be an array");
    std::vector<ReturnLength> out;
    for (const auto& v : j) {
        if (v.is_string() && v.get<std::string>() == "inf") out.push_back(kInfiniteReturn);
        else if (v.is_number_integer() && v.get<long>() >= -1 && v.get<long>() < kInfiniteReturn) out.push_back(v.get<int>());
        else throw ConfigError("ope.lengths entries must be integers >= -1 or \"inf\"");
    }
    return out;
}

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir = ".") {
    PipelineConfig c;
    c.base_dir = base_dir;
    detail::Section root(j, "");
    if (auto s = root.section("paths")) {
        s->get("input", c.input);
        s->get("format", c.format);
        s->get("output_dir", c.output_dir);
        if (const auto* schema = s->raw("schema")) c.schema = CsvSchema::from_json(*schema);
        s->finish();
    }
    OFFRL_REQUIRE(c.format == "csv" || c.format == "jsonl", ConfigError, "paths.format must be csv|jsonl");
    if (auto s = root.section("split")) {
        s->get("eval_fraction", c.eval_fraction);
        s->finish();
    }
    if (auto s = root.section("discretize")) {
        std::string method = to_string(c.discretize.method);
        s->get("method", method);
        c.discretize.method = detail::parse_method(method);
        s->get("seeds", c.discretize.seeds);
        s->get("k_max", c.discretize.k_max);
        s->get("k", c.discretize.k);
        s->get("min_pts", c.discretize.min_pts);
        s->get("xi", c.discretize.xi);
        s->get("max_eps", c.discretize.max_eps);
        s->get("standardize", c.discretize.standardize);
        s->finish();
    }
    OFFRL_REQUIRE(!c.discretize.seeds.empty(), ConfigError, "discretize.seeds must not be empty");
    if (auto s = root.section("train")) {
        auto& t = c.train;
        s->get("epochs", t.epochs);
        s->get("batch_size", t.batch_size);
        s->get("tau", t.tau);
        s->get("sync_every", t.sync_every);
        s->get("gamma", t.gamma);
        s->get("learning_rate", t.learning_rate);
        s->get("lr_decay", t.lr_decay);
        s->get("ope_eval_every", t.ope_eval_every);
        std::string rule = t.target_rule == TargetRule::DoubleQ ? "double_q" : "target_argmax";
        s->get("target_rule", rule);
        OFFRL_REQUIRE(rule == "double_q" || rule == "target_argmax", ConfigError,
                      "train.target_rule must be double_q|target_argmax");
        t.target_rule = rule == "double_q" ? TargetRule::DoubleQ : TargetRule::TargetArgmax;
        s->get("gradient_on_sync_only", t.gradient_on_sync_only);
        s->get("shared_units", t.shared_units);
        s->get("stream_units", t.stream_units);
        s->get("checkpoint_every", c.checkpoint_every);
        s->get("resume", c.resume);
        s->finish();
    }
    c.train.validate();
    OFFRL_REQUIRE(c.checkpoint_every >= 0, ConfigError, "train.checkpoint_every must be >= 0");
    if (auto s = root.section("ope")) {
        if (const auto* l = s->raw("lengths")) c.ope.lengths = detail::parse_lengths(*l);
        s->get("bootstrap_resamples", c.ope.bootstrap_resamples);
        s->get("epsilon", c.ope.epsilon);
        s->get("alpha", c.ope.alpha);
        s->get("strict_swdr", c.ope.strict_swdr);
        s->get("literal_interval", c.ope.literal_interval);
        s->get("policy", c.ope.policy);
        s->finish();
    }
    OFFRL_REQUIRE(c.ope.bootstrap_resamples >= kMinBootstrapResamples, ConfigError,
                  "ope.bootstrap_resamples must be >= " + std::to_string(kMinBootstrapResamples));
    OFFRL_REQUIRE(c.ope.epsilon >= 0.0 && c.ope.epsilon <= 1.0, ConfigError, "ope.epsilon must lie in [0, 1]");
    OFFRL_REQUIRE(c.ope.alpha > 0.0, ConfigError, "ope.alpha must be > 0");
    OFFRL_REQUIRE(c.ope.policy == "learned" || c.ope.policy == "behavior", ConfigError,
                  "ope.policy must be learned|behavior");
    if (auto s = root.section("benchmark")) {
        s->get("spec", c.benchmark.spec);
        s->get("eval_policy", c.benchmark.eval_policy);
        s->get("sizes", c.benchmark.sizes);
        s->get("seeds", c.benchmark.seeds);
        s->get("seed", c.benchmark.seed);
        s->finish();
    }
    OFFRL_REQUIRE(c.benchmark.seeds >= 1 && !c.benchmark.sizes.empty(), ConfigError,
                  "benchmark needs at least one size and one seed");
    if (auto s = root.section("generate")) {
        s->get("students", c.generate.students);
        s->get("seed", c.generate.seed);
        s->get("world_seed", c.generate.world_seed);
        s->get("horizon", c.generate.horizon);
        s->finish();
    }
    if (auto s = root.section("report")) {
        s->get("cluster_points", c.report.cluster_points);
        s->finish();
    }
    root.finish();
    OFFRL_REQUIRE(c.eval_fraction > 0.0 && c.eval_fraction < 1.0, ConfigError, "split.eval_fraction must lie in (0, 1)");
    return c;
}

inline PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    OFFRL_REQUIRE(in.good(), ConfigError, "cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

// ---------------------------------------------------------------------------
// Files

/// Writes through a temporary sibling and renames it into place.
inline void write_atomic(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        OFFRL_REQUIRE(out.good(), DataError, "cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        OFFRL_REQUIRE(out.good(), DataError, "write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    OFFRL_REQUIRE(in.good(), DataError, "missing " + what + " '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline nlohmann::json read_json(const fs::path& path, const std::string& what) {
    try {
        return nlohmann::json::parse(read_file(path, what));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(what + " '" + path.string() + "': " + e.what());
    }
}

/// Tab-separated table preceded by a "# offrl-<kind> v1" line.
class Table {
public:
    Table(std::string kind, std::vector<std::string> columns) : kind_(std::move(kind)), columns_(std::move(columns)) {}

    Table& row(std::vector<std::string> cells) {
        OFFRL_REQUIRE(cells.size() == columns_.size(), ConfigError, "table row has the wrong width");
        rows_.push_back(std::move(cells));
        return *this;
    }

    std::string str() const {
        std::string s = "# offrl-" + kind_ + " v1\n";
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "\t" : "") + cells[i];
            s += '\n';
        };
        line(columns_);
        for (const auto& r : rows_) line(r);
        return s;
    }

    void write(const fs::path& path) const { write_atomic(path, str()); }

private:
    std::string kind_;
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

struct TableData {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t col(const std::string& name) const {
        const auto it = std::find(columns.begin(), columns.end(), name);
        OFFRL_REQUIRE(it != columns.end(), ParseError, "table lacks column '" + name + "'");
        return static_cast<std::size_t>(it - columns.begin());
    }
};

inline TableData read_table(const fs::path& path, const std::string& kind) {
    std::istringstream in(read_file(path, kind + " table"));
    std::string line;
    std::getline(in, line);
    OFFRL_REQUIRE(line == "# offrl-" + kind + " v1", ParseError, "'" + path.string() + "' is not a v1 " + kind + " table");
    auto split_tabs = [](const std::string& l) {
        std::vector<std::string> cells;
        std::stringstream ss(l);
        std::string cell;
        while (std::getline(ss, cell, '\t')) cells.push_back(cell);
        if (!l.empty() && l.back() == '\t') cells.emplace_back();
        return cells;
    };
    TableData t;
    std::getline(in, line);
    t.columns = split_tabs(line);
    while (std::getline(in, line))
        if (!line.empty()) t.rows.push_back(split_tabs(line));
    return t;
}

inline std::string num(double v) { return std::isfinite(v) ? format_double(v) : (std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf")); }
inline double parse_num(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    return std::stod(s);
}

template <class Range, class F>
std::string join(const Range& r, F f, const char* sep = ",") {
    std::string s;
    bool first = true;
    for (const auto& x : r) {
        if (!first) s += sep;
        s += f(x);
        first = false;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Trials

inline std::string trial_name(const PipelineConfig& c, std::uint64_t seed) {
    return std::string(to_string(c.discretize.method)) + "_s" + std::to_string(seed);
}

struct TrialPaths {
    fs::path model, clusters, points, dataset, train_dir, checkpoint, train_log, timing, ope, actions;
};

inline TrialPaths trial_paths(const PipelineConfig& c, std::uint64_t seed) {
    const auto name = trial_name(c, seed);
    const auto out = c.out();
    TrialPaths p;
    p.model = out / "discretize" / (name + ".model.json");
    p.clusters = out / "discretize" / (name + ".clusters.tsv");
    p.points = out / "discretize" / (name + ".points.tsv");
    p.dataset = out / "discretize" / (name + ".dataset.jsonl");
    p.train_dir = out / "train" / name;
    p.checkpoint = p.train_dir / "checkpoint.json";
    p.train_log = p.train_dir / "train_log.tsv";
    p.timing = p.train_dir / "timing.tsv";
    p.ope = out / "evaluate" / (name + ".ope.tsv");
    p.actions = out / "evaluate" / (name + ".actions.tsv");
    return p;
}

inline Dataset load_input(const PipelineConfig& c) {
    OFFRL_REQUIRE(!c.input.empty(), ConfigError, "paths.input is not set");
    const auto path = c.resolve(c.input);
    OFFRL_REQUIRE(fs::exists(path), DataError, "input dataset '" + path.string() + "' does not exist");
    return c.format == "csv" ? load_csv(path.string(), c.schema) : load_jsonl(path.string());
}

inline ClusterModel fit_clusters(const DiscretizeConfig& d, const PointMatrix& x, std::uint64_t seed) {
    switch (d.method) {
    case ClusterMethod::XMeans: return xmeans_fit(x, d.k_max, seed, d.standardize);
    case ClusterMethod::KMeans: return kmeans_fit(x, d.k, seed, d.standardize);
    case ClusterMethod::Optics: return optics_fit(x, d.min_pts, d.xi, d.standardize, d.max_eps).second;
    }
    throw ConfigError("unknown cluster method");
}

/// Per-cluster PCA-3D position, frequency and dropout rate. Centroid columns
/// are emitted only for centroid methods.
inline Table cluster_table(const ClusterModel& model, const Dataset& discretized, const PcaResult& pca) {
    std::vector<std::string> cols = {"cluster", "noise", "pc1", "pc2", "pc3", "frequency", "dropout_rate"};
    const bool centroids = model.method != ClusterMethod::Optics;
    if (centroids)
        for (const char* f : kFeatureNames) cols.push_back(std::string("centroid_") + f);
    Table t("clusters", cols);
    const int S = model.n_states();
    std::vector<std::array<double, 3>> pc(static_cast<std::size_t>(S), {0.0, 0.0, 0.0});
    std::vector<double> freq(static_cast<std::size_t>(S), 0.0), drop(static_cast<std::size_t>(S), 0.0);
    Eigen::Index row = 0;
    for (const auto& traj : discretized.trajectories) {
        const bool dropout = !traj.steps.back().success;
        for (const auto& tr : traj.steps) {
            const auto s = static_cast<std::size_t>(tr.state);
            for (int d = 0; d < 3; ++d) pc[s][static_cast<std::size_t>(d)] += pca.projected(row, d);
            freq[s] += 1.0;
            drop[s] += dropout ? 1.0 : 0.0;
            ++row;
        }
    }
    for (int s = 0; s < S; ++s) {
        const auto i = static_cast<std::size_t>(s);
        const double f = freq[i];
        std::vector<std::string> cells = {std::to_string(s), s == model.noise_label() ? "1" : "0"};
        for (int d = 0; d < 3; ++d) cells.push_back(f > 0 ? num(pc[i][static_cast<std::size_t>(d)] / f) : "nan");
        cells.push_back(std::to_string(static_cast<long>(f)));
        cells.push_back(f > 0 ? num(drop[i] / f) : "nan");
        if (centroids) {
            // centroids back in raw feature units
            for (Eigen::Index d = 0; d < model.dim(); ++d)
                cells.push_back(num(model.centroids(s, d) * model.scaler.scale[static_cast<std::size_t>(d)] +
                                    model.scaler.offset[static_cast<std::size_t>(d)]));
        }
        t.row(cells);
    }
    return t;
}

inline void cmd_discretize(const PipelineConfig& c) {
    const Dataset raw = load_input(c);
    const auto x = to_matrix(collect_features(raw));
    const auto pca = pca_project(x, 3, c.discretize.standardize);
    for (const auto seed : c.discretize.seeds) {
        const auto p = trial_paths(c, seed);
        const auto model = fit_clusters(c.discretize, x, seed);
        const auto dd = discretize_dataset(raw, model);
        write_atomic(p.model, to_json(model).dump(1) + "\n");
        std::ostringstream ds_out;
        save_jsonl(ds_out, dd);
        write_atomic(p.dataset, ds_out.str());
        cluster_table(model, dd, pca).write(p.clusters);
        if (c.report.cluster_points) {
            Table pts("points", {"pc1", "pc2", "pc3", "cluster"});
            Eigen::Index row = 0;
            for (const auto& traj : dd.trajectories)
                for (const auto& tr : traj.steps) {
                    pts.row({num(pca.projected(row, 0)), num(pca.projected(row, 1)), num(pca.projected(row, 2)),
                             std::to_string(tr.state)});
                    ++row;
                }
            pts.write(p.points);
        }
    }
}

/// Discretized dataset, dimensions and OPE context of one trial.
struct TrialData {
    Dataset full;
    Dataset train;
    int n_states = 0;
    OpeContext ope;
};

inline MagicOptions magic_options(const OpeConfig& o, std::uint64_t seed) {
    MagicOptions m;
    m.lengths = o.lengths;
    m.bootstrap_resamples = o.bootstrap_resamples;
    m.seed = seed;
    m.indexing = o.literal_interval ? IntervalIndexing::Literal : IntervalIndexing::Percentile;
    return m;
}

inline TrialData load_trial(const PipelineConfig& c, std::uint64_t seed) {
    const auto p = trial_paths(c, seed);
    OFFRL_REQUIRE(fs::exists(p.model) && fs::exists(p.dataset), DataError,
                  "missing discretize output for trial '" + trial_name(c, seed) + "' (expected '" + p.model.string() +
                      "'); run the discretize command first");
    const auto model = cluster_model_from_json(read_json(p.model, "cluster model"));
    TrialData t;
    t.full = load_jsonl(p.dataset.string());
    t.n_states = model.n_states();
    auto [train_split, eval_split] = split(t.full, c.eval_fraction, derive_seed(seed, 3));
    t.train = std::move(train_split);
    t.ope.eval = std::move(eval_split);
    t.ope.behavior = estimate_behavior_policy(t.full, t.n_states, ActionId::kCount, c.ope.alpha);
    t.ope.model = fit_mdp(t.train, t.n_states, ActionId::kCount, c.train.gamma, default_horizon(t.train));
    t.ope.magic = magic_options(c.ope, derive_seed(seed, 4));
    t.ope.strict_swdr = c.ope.strict_swdr;
    t.ope.gamma = c.train.gamma;
    t.ope.epsilon = c.ope.epsilon;
    return t;
}

inline nlohmann::json log_to_json(const TrainLog& log) {
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& e : log.evals) evals.push_back({e.step, e.swdr, e.magic, e.swdr_score, e.magic_score});
    return {{"loss", log.loss}, {"evals", evals}};
}

inline void append_log_json(TrainLog& log, const nlohmann::json& j) {
    for (double l : j.at("loss")) log.loss.push_back(l);
    for (const auto& e : j.at("evals")) {
        auto val = [&](std::size_t i) { return e[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : e[i].get<double>(); };
        log.evals.push_back({e[0].get<long>(), val(1), val(2), val(3), val(4)});
    }
}

inline Table train_log_table(const TrainLog& log) {
    Table t("train-log", {"step", "loss", "swdr", "magic", "swdr_score", "magic_score"});
    std::size_t e = 0;
    for (std::size_t i = 0; i < log.loss.size(); ++i) {
        const long step = static_cast<long>(i) + 1;
        std::vector<std::string> cells = {std::to_string(step), num(log.loss[i]), "", "", "", ""};
        if (e < log.evals.size() && log.evals[e].step == step) {
            const auto& r = log.evals[e++];
            cells[2] = num(r.swdr);
            cells[3] = num(r.magic);
            cells[4] = num(r.swdr_score);
            cells[5] = num(r.magic_score);
        }
        t.row(cells);
    }
    return t;
}

/// Runs (or resumes) training for every trial. `stop_after` halts each trial
/// once that many total steps have run, leaving a resumable checkpoint.
inline void cmd_train(const PipelineConfig& c, std::optional<long> stop_after = std::nullopt) {
    for (const auto seed : c.discretize.seeds) {
        const auto p = trial_paths(c, seed);
        const auto trial = load_trial(c, seed);
        TrainConfig cfg = c.train;
        cfg.seed = seed;

        TrainState st = initial_train_state(trial.n_states, ActionId::kCount, cfg);
        TrainLog log;
        if (c.resume && fs::exists(p.checkpoint)) {
            const auto j = read_json(p.checkpoint, "checkpoint");
            OFFRL_REQUIRE(j.value("seed", std::uint64_t{0}) == seed, ConfigError,
                          "checkpoint '" + p.checkpoint.string() + "' belongs to another seed");
            st = checkpoint_from_json(j);
            append_log_json(log, j.at("log"));
        }
        const long total = steps_per_epoch(trial.train.m(), cfg.batch_size) * cfg.epochs;
        const long limit = stop_after ? std::min(*stop_after, total) : total;
        std::vector<double> seconds;
        do {
            const long target = c.checkpoint_every > 0 ? std::min(limit, st.step + c.checkpoint_every) : limit;
            auto res = train(trial.train, trial.n_states, ActionId::kCount, cfg, &trial.ope, std::move(st), target);
            st = std::move(res.state);
            log.loss.insert(log.loss.end(), res.log.loss.begin(), res.log.loss.end());
            log.evals.insert(log.evals.end(), res.log.evals.begin(), res.log.evals.end());
            seconds.insert(seconds.end(), res.log.epoch_seconds.begin(), res.log.epoch_seconds.end());
            for (const auto& w : res.log.warnings)
                if (std::find(log.warnings.begin(), log.warnings.end(), w) == log.warnings.end()) log.warnings.push_back(w);
            auto ck = checkpoint_to_json(st, seed);
            ck["log"] = log_to_json(log);
            ck["total_steps"] = total;
            write_atomic(p.checkpoint, ck.dump() + "\n");
        } while (st.step < limit);
        train_log_table(log).write(p.train_log);
        Table timing("timing", {"epoch_index", "seconds"});
        for (std::size_t i = 0; i < seconds.size(); ++i) timing.row({std::to_string(i), num(seconds[i])});
        timing.write(p.timing);
    }
}

/// Learned ε-greedy policy of a trial, or the estimated behavior policy when
/// ope.policy is "behavior".
struct TrialPolicy {
    PolicyTable evaluation;
    PolicyTable greedy;
};

inline TrialPolicy trial_policy(const PipelineConfig& c, std::uint64_t seed, const TrialData& trial) {
    if (c.ope.policy == "behavior") return {trial.ope.behavior, trial.ope.behavior};
    const auto p = trial_paths(c, seed);
    OFFRL_REQUIRE(fs::exists(p.checkpoint), DataError,
                  "missing checkpoint '" + p.checkpoint.string() + "'; run the train command first");
    const auto ck = read_json(p.checkpoint, "checkpoint");
    OFFRL_REQUIRE(ck.value("step", 0L) == ck.value("total_steps", -1L), DataError,
                  "checkpoint '" + p.checkpoint.string() + "' is from an unfinished run; rerun train to resume it");
    const auto st = checkpoint_from_json(ck);
    return {to_policy(st.net, PolicyMode::epsilon_greedy(c.ope.epsilon)), to_policy(st.net, PolicyMode::greedy())};
}

inline void ope_rows(Table& t, const std::string& name, const MagicResult& r, const OpeScore& score, std::uint64_t seed) {
    t.row({name, num(r.estimate), num(score.value), score.defined ? "1" : "0", num(r.lower), num(r.upper), num(r.wdr),
           join(r.lengths, [](ReturnLength j) { return return_length_name(j); }),
           join(std::vector<double>(r.x.data(), r.x.data() + r.x.size()), num),
           join(r.g, num), std::to_string(seed)});
}

struct BandSummary {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double low = std::numeric_limits<double>::quiet_NaN();
    double high = std::numeric_limits<double>::quiet_NaN();
    std::size_t n = 0;
    bool band = false;  // false when fewer than two finite values
};

/// Mean and two-sided 95% Student-t interval over trials.
inline BandSummary t_band(const std::vector<double>& values) {
    BandSummary b;
    std::vector<double> v;
    for (double x : values)
        if (std::isfinite(x)) v.push_back(x);
    b.n = v.size();
    if (v.empty()) return b;
    b.mean = 0.0;
    for (double x : v) b.mean += x;
    b.mean /= static_cast<double>(v.size());
    if (v.size() < 2) return b;
    double ss = 0.0;
    for (double x : v) ss += (x - b.mean) * (x - b.mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    const boost::math::students_t dist(static_cast<double>(v.size() - 1));
    const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
    const double half = q * sd / std::sqrt(static_cast<double>(v.size()));
    b.low = b.mean - half;
    b.high = b.mean + half;
    b.band = true;
    return b;
}

inline std::vector<std::string> band_cells(const BandSummary& b) {
    return {std::to_string(b.n), num(b.mean), b.band ? num(b.low) : "", b.band ? num(b.high) : "",
            b.band ? "ok" : "single_trial"};
}

inline void cmd_evaluate(const PipelineConfig& c) {
    std::map<std::string, std::vector<double>> scores, estimates;
    for (const auto seed : c.discretize.seeds) {
        const auto p = trial_paths(c, seed);
        const auto trial = load_trial(c, seed);
        const auto pol = trial_policy(c, seed, trial);
        const auto ev = evaluate_policy(trial.ope, pol.evaluation);
        Table t("ope-report", {"estimator", "estimate", "score", "score_defined", "lower", "upper", "wdr", "lengths",
                               "weights", "g", "seed"});
        ope_rows(t, "swdr", ev.swdr, ev.swdr_score, seed);
        ope_rows(t, "magic", ev.magic, ev.magic_score, seed);
        t.write(p.ope);
        scores["swdr"].push_back(ev.swdr_score.value);
        scores["magic"].push_back(ev.magic_score.value);
        estimates["swdr"].push_back(ev.swdr.estimate);
        estimates["magic"].push_back(ev.magic.estimate);

        const auto learned = action_frequencies(pol.greedy, trial.ope.eval);
        const auto logged = action_frequencies(trial.ope.eval, ActionId::kCount);
        Table a("actions", {"action", "plan", "aid", "learned", "logged"});
        for (int i = 0; i < ActionId::kCount; ++i)
            a.row({std::to_string(i), std::to_string(i / 5), std::to_string(i % 5),
                   std::to_string(learned[static_cast<std::size_t>(i)]), std::to_string(logged[static_cast<std::size_t>(i)])});
        a.write(p.actions);
    }
    Table s("ope-summary", {"estimator", "quantity", "trials", "mean", "band_low", "band_high", "band"});
    for (const char* name : {"swdr", "magic"}) {
        for (const auto& [quantity, values] : {std::pair{"score", scores[name]}, std::pair{"estimate", estimates[name]}}) {
            std::vector<std::string> cells = {name, quantity};
            for (auto& x : band_cells(t_band(values))) cells.push_back(x);
            s.row(cells);
        }
    }
    s.write(c.out() / "evaluate" / "summary.tsv");
}

// ---------------------------------------------------------------------------
// Benchmark against the DP oracle

struct BenchmarkRow {
    std::size_t n = 0;
    int seed = 0;
    std::string estimator;
    double estimate = 0.0;
    double exact = 0.0;
    double rel_error() const { return (estimate - exact) / exact; }
};

inline PolicyTable load_eval_policy(const fs::path& path, const SyntheticMdpSpec& spec) {
    const auto j = read_json(path, "evaluation policy");
    detail::Section s(j, "eval_policy");
    std::vector<int> greedy;
    double eps = 0.1;
    s.get("greedy_actions", greedy);
    s.get("epsilon", eps);
    s.finish();
    OFFRL_REQUIRE(static_cast<int>(greedy.size()) == spec.n_states, ConfigError,
                  "evaluation policy needs one greedy action per state");
    PolicyTable pi(spec.n_states, spec.n_actions);
    for (int st = 0; st < spec.n_states; ++st) {
        OFFRL_REQUIRE(greedy[static_cast<std::size_t>(st)] >= 0 && greedy[static_cast<std::size_t>(st)] < spec.n_actions,
                      ConfigError, "greedy action out of range");
        for (int a = 0; a < spec.n_actions; ++a)
            pi(st, a) = eps / spec.n_actions + (a == greedy[static_cast<std::size_t>(st)] ? 1.0 - eps : 0.0);
    }
    return pi;
}

/// SWDR and MAGIC on one generated dataset with a fitted model and estimated π_b.
inline std::pair<double, double> estimate_on_synthetic(SyntheticMdpSpec spec, const PolicyTable& pi_e, std::size_t n,
                                                       std::uint64_t data_seed, const OpeConfig& o, double gamma) {
    spec.seed = data_seed;
    const auto ds = generate_synthetic(spec, n);
    const auto pi_b = estimate_behavior_policy(ds, spec.n_states, spec.n_actions, o.alpha);
    const auto mdp = fit_mdp(ds, spec.n_states, spec.n_actions, gamma, default_horizon(ds));
    const auto d = make_ope_data(ds, importance_ratios(ds, pi_e, pi_b), model_values(mdp, pi_e), gamma);
    const auto opt = magic_options(o, data_seed);
    const double sw = swdr_result(d, opt.bootstrap_resamples, opt.seed, o.strict_swdr, opt.indexing).estimate;
    return {sw, magic(d, opt).estimate};
}

inline std::vector<BenchmarkRow> run_benchmark(const SyntheticMdpSpec& spec, const PolicyTable& pi_e,
                                               const BenchmarkConfig& b, const OpeConfig& o, double gamma) {
    const double exact = exact_policy_value(spec, pi_e, gamma, spec.horizon_max);
    std::vector<BenchmarkRow> rows;
    for (const auto n : b.sizes)
        for (int r = 0; r < b.seeds; ++r) {
            const auto [sw, mg] = estimate_on_synthetic(spec, pi_e, n, derive_seed(b.seed, n * 1000 + r), o, gamma);
            rows.push_back({n, r, "swdr", sw, exact});
            rows.push_back({n, r, "magic", mg, exact});
        }
    return rows;
}

inline double median(std::vector<double> v) {
    OFFRL_REQUIRE(!v.empty(), InsufficientDataError, "median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline void cmd_benchmark(const PipelineConfig& c) {
    const auto spec = load_spec(c.resolve(c.benchmark.spec).string());
    const auto pi_e = load_eval_policy(c.resolve(c.benchmark.eval_policy), spec);
    const auto rows = run_benchmark(spec, pi_e, c.benchmark, c.ope, c.train.gamma);
    Table t("benchmark", {"n", "seed", "estimator", "estimate", "exact", "rel_error"});
    for (const auto& r : rows)
        t.row({std::to_string(r.n), std::to_string(r.seed), r.estimator, num(r.estimate), num(r.exact), num(r.rel_error())});
    t.write(c.out() / "benchmark" / "benchmark.tsv");
    Table s("benchmark-summary", {"n", "estimator", "median_abs_error", "median_rel_error"});
    for (const auto n : c.benchmark.sizes)
        for (const char* name : {"swdr", "magic"}) {
            std::vector<double> abs_err, rel;
            for (const auto& r : rows)
                if (r.n == n && r.estimator == name) {
                    abs_err.push_back(std::abs(r.estimate - r.exact));
                    rel.push_back(std::abs(r.rel_error()));
                }
            s.row({std::to_string(n), name, num(median(abs_err)), num(median(rel))});
        }
    s.write(c.out() / "benchmark" / "benchmark_summary.tsv");
}

// ---------------------------------------------------------------------------
// Report: plot-ready tables gathered from the per-trial outputs

inline void cmd_report(const PipelineConfig& c) {
    const auto out = c.out() / "report";
    std::vector<std::string> cluster_cols;
    std::vector<std::vector<std::string>> cluster_rows;
    std::map<long, std::pair<std::vector<double>, std::vector<double>>> by_step;
    std::vector<std::vector<double>> learned(ActionId::kCount), logged(ActionId::kCount);
    for (const auto seed : c.discretize.seeds) {
        const auto p = trial_paths(c, seed);
        const auto name = trial_name(c, seed);
        const auto ct = read_table(p.clusters, "clusters");
        if (cluster_cols.empty()) {
            cluster_cols = {"trial"};
            cluster_cols.insert(cluster_cols.end(), ct.columns.begin(), ct.columns.end());
        }
        for (const auto& r : ct.rows) {
            std::vector<std::string> cells = {name};
            cells.insert(cells.end(), r.begin(), r.end());
            cluster_rows.push_back(cells);
        }
        const auto log = read_table(p.train_log, "train-log");
        const auto cs = log.col("step"), cw = log.col("swdr_score"), cm = log.col("magic_score");
        for (const auto& r : log.rows) {
            if (r[cw].empty()) continue;
            auto& slot = by_step[std::stol(r[cs])];
            slot.first.push_back(parse_num(r[cw]));
            slot.second.push_back(parse_num(r[cm]));
        }
        const auto acts = read_table(p.actions, "actions");
        for (const auto& r : acts.rows) {
            const auto a = static_cast<std::size_t>(std::stoi(r[acts.col("action")]));
            learned.at(a).push_back(std::stod(r[acts.col("learned")]));
            logged.at(a).push_back(std::stod(r[acts.col("logged")]));
        }
    }
    Table clusters("report-clusters", cluster_cols);
    for (auto& r : cluster_rows) {
        r.resize(cluster_cols.size());  // trials of one method share columns
        clusters.row(r);
    }
    clusters.write(out / "clusters.tsv");

    Table scores("score-curves", {"step", "swdr_trials", "swdr_mean", "swdr_low", "swdr_high", "swdr_band", "magic_trials",
                                 "magic_mean", "magic_low", "magic_high", "magic_band"});
    for (const auto& [step, v] : by_step) {
        std::vector<std::string> cells = {std::to_string(step)};
        for (auto& x : band_cells(t_band(v.first))) cells.push_back(x);
        for (auto& x : band_cells(t_band(v.second))) cells.push_back(x);
        scores.row(cells);
    }
    scores.write(out / "score_curves.tsv");

    Table actions("action-shares", {"action", "plan", "aid", "learned_mean", "logged_mean"});
    for (int a = 0; a < ActionId::kCount; ++a) {
        const auto& l = learned[static_cast<std::size_t>(a)];
        const auto& g = logged[static_cast<std::size_t>(a)];
        actions.row({std::to_string(a), std::to_string(a / 5), std::to_string(a % 5), num(t_band(l).mean), num(t_band(g).mean)});
    }
    actions.write(out / "action_shares.tsv");

    const auto summary = c.out() / "evaluate" / "summary.tsv";
    if (fs::exists(summary)) write_atomic(out / "ope_summary.tsv", read_file(summary, "evaluation summary"));
}

/// Writes a course-level CSV from the synthetic student generator.
inline void cmd_generate(const PipelineConfig& c, const fs::path& csv_path) {
    const auto world = student_world(c.generate.world_seed, c.generate.horizon);
    const auto terms = simulate_students(world, c.generate.students, c.generate.seed);
    std::ostringstream out;
    write_course_csv(out, world, terms);
    write_atomic(csv_path, out.str());
}

}  // namespace offrl

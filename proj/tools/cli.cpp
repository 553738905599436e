#include "cli.hpp"

#include "dynabench/attractor_bench.hpp"
#include "dynabench/random.hpp"
#include "dynabench/schedule_bench.hpp"

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <deque>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace dynabench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::pair<Protocol, std::string_view>, 9> kProtocols{{
    {Protocol::AttractorNoise, "attractor-noise"},
    {Protocol::AttractorCompose, "attractor-compose"},
    {Protocol::AttractorMotifs, "attractor-motifs"},
    {Protocol::DsaSearch, "dsa-search"},
    {Protocol::RnnBattery, "rnn-battery"},
    {Protocol::RnnCompare, "rnn-compare"},
    {Protocol::RnnAccuracy, "rnn-accuracy"},
    {Protocol::RnnOverlap, "rnn-overlap"},
    {Protocol::Report, "report"},
}};

std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end || v.empty())
        throw UsageError("invalid value for " + key + ": '" + v + "' (expected a non-negative integer)");
    return out;
}

std::uint64_t parse_seed(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end || v.empty())
        throw UsageError("invalid value for " + key + ": '" + v + "' (expected an unsigned 64-bit integer)");
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end || v.empty() || !std::isfinite(out))
        throw UsageError("invalid value for " + key + ": '" + v + "' (expected a number)");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("invalid value for " + key + ": '" + v + "' (expected true or false)");
}

std::vector<Metric> parse_metrics(const std::string& key, const std::string& v) {
    std::vector<Metric> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            const auto m = metric_from_string(item);
            if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
        } catch (const Error&) {
            throw UsageError("invalid value for " + key + ": unknown metric '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError("invalid value for " + key + ": no metrics given");
    std::sort(out.begin(), out.end());
    return out;
}

struct Key {
    std::string name;  // "section.key"
    std::string flag;
    std::string help;
    bool is_flag = false;
    std::function<void(RunConfig&, const std::string&)> set;
};

// Every config-file key, with its mirroring flag.
const std::vector<Key>& keys() {
    static const std::vector<Key> k = [] {
        std::vector<Key> v;
        auto add = [&](std::string name, std::string flag, std::string help, bool is_flag,
                       std::function<void(RunConfig&, const std::string&)> set) {
            v.push_back({std::move(name), std::move(flag), std::move(help), is_flag, std::move(set)});
        };
        add("run.protocol", "--protocol", "protocol to run", false,
            [](RunConfig& c, const std::string& s) {
                try {
                    c.protocol = protocol_from_string(s);
                } catch (const Error&) {
                    throw UsageError("invalid value for run.protocol: '" + s + "'");
                }
            });
        add("run.scale", "--scale", "desk or paper", false, [](RunConfig& c, const std::string& s) {
            try {
                c.scale = scale_from_string(s);
            } catch (const Error&) {
                throw UsageError("invalid value for run.scale: '" + s + "'");
            }
        });
        add("run.seed", "--seed", "master seed", false,
            [](RunConfig& c, const std::string& s) { c.seed = parse_seed("run.seed", s); });
        add("run.metrics", "--metrics", "comma-separated subset of CKA,PROCRUSTES,DSA", false,
            [](RunConfig& c, const std::string& s) { c.metrics = parse_metrics("run.metrics", s); });
        add("run.out", "--out", "output directory", false, [](RunConfig& c, const std::string& s) {
            if (s.empty()) throw UsageError("invalid value for run.out: empty path");
            c.out = s;
        });
        add("run.workers", "--workers", "worker threads", false, [](RunConfig& c, const std::string& s) {
            c.workers = parse_count("run.workers", s);
            if (c.workers == 0) throw UsageError("invalid value for run.workers: must be >= 1");
        });
        add("run.resume", "--resume", "continue an interrupted rnn-battery", true,
            [](RunConfig& c, const std::string& s) { c.resume = parse_bool("run.resume", s); });
        add("dsa.n_delays", "--dsa-n-delays", "DSA delay count", false,
            [](RunConfig& c, const std::string& s) { c.dsa.n_delays = parse_count("dsa.n_delays", s); });
        add("dsa.delay_interval", "--dsa-delay-interval", "DSA delay interval", false,
            [](RunConfig& c, const std::string& s) { c.dsa.delay_interval = parse_count("dsa.delay_interval", s); });
        add("dsa.rank_tolerance", "--dsa-rank-tolerance", "DSA explained-variance rank cut", false,
            [](RunConfig& c, const std::string& s) { c.dsa.rank_tolerance = parse_real("dsa.rank_tolerance", s); });
        add("attractor.samples", "--attractor-samples", "noise samples per attractor or pair (0: scale default)",
            false, [](RunConfig& c, const std::string& s) {
                c.attractor_samples = parse_count("attractor.samples", s);
            });
        add("search.rounds", "--search-rounds", "refinement rounds (0: scale default)", false,
            [](RunConfig& c, const std::string& s) { c.search_rounds = parse_count("search.rounds", s); });
        add("search.samples", "--search-samples", "noise samples per candidate (0: scale default)", false,
            [](RunConfig& c, const std::string& s) { c.search_samples = parse_count("search.samples", s); });
        add("rnn.battery", "--rnn-battery", "battery directory (default <out>/battery)", false,
            [](RunConfig& c, const std::string& s) { c.battery = s; });
        add("rnn.include_unconverged", "--rnn-include-unconverged", "analyze networks below the accuracy target",
            true, [](RunConfig& c, const std::string& s) {
                c.include_unconverged = parse_bool("rnn.include_unconverged", s);
            });
        add("rnn.epoch_budget", "--rnn-epoch-budget", "stop after this many training epochs (0: no limit)", false,
            [](RunConfig& c, const std::string& s) { c.epoch_budget = parse_count("rnn.epoch_budget", s); });
        add("report.input", "--report-input", "directory with protocol CSVs (default <out>)", false,
            [](RunConfig& c, const std::string& s) { c.report_input = s; });
        return v;
    }();
    return k;
}

const Key* find_key(const std::string& name) {
    for (const auto& k : keys())
        if (k.name == name) return &k;
    return nullptr;
}

void validate(const RunConfig& c) {
    try {
        c.dsa.validate();
    } catch (const Error& e) {
        throw UsageError(std::string("invalid DSA settings: ") + e.what());
    }
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

// ---- JSON views of the summaries, shared by the protocols and `report` ----

json to_json(const TestResult& t) {
    return {{"t", t.t_statistic}, {"df", t.df}, {"raw_p", t.raw_p}, {"adjusted_p", t.adjusted_p}};
}

json to_json(const RegressionResult& r) {
    return {{"slope", r.slope},         {"intercept", r.intercept}, {"slope_p", r.slope_p_value},
            {"slope_se", r.slope_se},   {"r2", r.r2},               {"n", r.n},
            {"degenerate", r.degenerate}};
}

json to_json(const MetricSummary& s) {
    return {{"metric", to_string(s.metric)}, {"mean", s.mean},
            {"se", s.se},                    {"gap", s.gap},
            {"linearity_r2", s.linearity_r2}, {"comparisons", s.comparisons}};
}

json summaries_json(const std::vector<MetricSummary>& ss) {
    json out = json::array();
    for (const auto& s : ss) out.push_back(to_json(s));
    return out;
}

json to_json(const MotifReport& r) {
    json out = {{"names", r.names}, {"summaries", json::array()}};
    for (const auto& s : r.summaries) {
        json rows = json::array();
        for (Eigen::Index i = 0; i < s.values.rows(); ++i) {
            std::vector<double> row(static_cast<std::size_t>(s.values.cols()));
            for (Eigen::Index j = 0; j < s.values.cols(); ++j) row[static_cast<std::size_t>(j)] = s.values(i, j);
            rows.push_back(row);
        }
        out["summaries"].push_back({{"metric", to_string(s.metric)},
                                    {"values", rows},
                                    {"within", s.within},
                                    {"across", s.across},
                                    {"gap", s.gap}});
    }
    return out;
}

json groups_json(const std::vector<GroupSummary>& gs) {
    json out = json::array();
    for (const auto& g : gs) {
        json j = {{"group", to_string(g.group)}, {"n", g.n}, {"median", g.median}, {"se", g.se}};
        j["vs_full"] = g.vs_full ? to_json(*g.vs_full) : json(nullptr);
        out.push_back(j);
    }
    return out;
}

json to_json(const GroupMatrix& m) {
    json names = json::array();
    for (auto g : m.groups) names.push_back(to_string(g));
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.median.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.median.cols(); ++j) {
            const double v = m.median(i, j);
            row.push_back(std::isnan(v) ? json(nullptr) : json(v));
        }
        rows.push_back(row);
    }
    return {{"groups", names}, {"median", rows}};
}

json to_json(const RankCurves& rc) {
    json curves = json::array();
    for (std::size_t r = 0; r < rc.ranks.size(); ++r) {
        json med = json::array();
        for (double v : rc.median[r]) med.push_back(std::isnan(v) ? json(nullptr) : json(v));
        curves.push_back({{"rank", rc.ranks[r]},
                          {"median", med},
                          {"trend", rc.trend[r] ? json(*rc.trend[r]) : json(nullptr)}});
    }
    return curves;
}

std::vector<ComparisonRecord> only(const std::vector<ComparisonRecord>& rows, Metric m) {
    std::vector<ComparisonRecord> out;
    for (const auto& r : rows)
        if (r.metric == m) out.push_back(r);
    return out;
}

std::vector<Metric> metrics_in(const std::vector<ComparisonRecord>& rows) {
    std::vector<Metric> out;
    for (const auto& r : rows)
        if (std::find(out.begin(), out.end(), r.metric) == out.end()) out.push_back(r.metric);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Metric> metrics_in(const std::vector<AttractorRow>& rows) {
    std::vector<Metric> out;
    for (const auto& r : rows)
        if (std::find(out.begin(), out.end(), r.metric) == out.end()) out.push_back(r.metric);
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t max_epoch(const std::vector<AttractorRow>& rows) {
    std::size_t e = 0;
    for (const auto& r : rows) e = std::max(e, r.epoch);
    return e;
}

std::size_t max_window(const std::vector<ComparisonRecord>& rows) {
    std::size_t w = 0;
    for (const auto& r : rows) w = std::max(w, r.window);
    return w;
}

std::uint64_t metric_seed(std::uint64_t seed, Metric m) { return derive_seed(seed, static_cast<std::uint64_t>(m)); }

std::string fmt(double v) {
    std::array<char, 32> buf{};
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), p);
}

// ---- execution context ----

struct Context {
    const RunConfig& cfg;
    std::ostream& log;
    std::vector<fs::path> outputs;
    json seeds = json::object();
    json failures = json::object();

    void emit(const fs::path& p) {
        if (std::find(outputs.begin(), outputs.end(), p) == outputs.end()) outputs.push_back(p);
    }

    void write_json(const fs::path& p, const json& j) {
        std::ofstream os(p, std::ios::binary);
        if (!os) throw IoError("cannot write " + p.string());
        os << j.dump(2) << '\n';
        if (!os) throw IoError("write failed: " + p.string());
        emit(p);
    }

    void write_text(const fs::path& p, const std::string& s) {
        std::ofstream os(p, std::ios::binary);
        if (!os) throw IoError("cannot write " + p.string());
        os << s;
        if (!os) throw IoError("write failed: " + p.string());
        emit(p);
    }

    BenchConfig bench() const {
        BenchConfig bc;
        bc.metrics = cfg.metrics;
        bc.dsa = cfg.dsa;
        bc.seed = cfg.seed;
        bc.workers = cfg.workers;
        return bc;
    }

    void save_attractors(const std::vector<AttractorSample>& atts, const fs::path& dir) {
        fs::create_directories(dir);
        for (const auto& a : atts) {
            const auto name = attractor_name(a);
            save_attractor(dir / name, a);
            emit(dir / (name + ".dynb"));
            emit(dir / (name + ".json"));
            seeds[name] = a.seed;
        }
    }
};

void log_summaries(std::ostream& log, const std::vector<MetricSummary>& ss) {
    for (const auto& s : ss) {
        log << "  " << std::left << std::setw(11) << to_string(s.metric) << " gap " << std::setw(12) << s.gap
            << " R2 " << s.linearity_r2 << "  epoch means";
        for (double m : s.mean) log << ' ' << m;
        log << '\n';
    }
}

int run_attractor_bench(Context& ctx, bool compose) {
    const auto& cfg = ctx.cfg;
    const auto atts = benchmark_attractors(cfg.seed);
    ctx.save_attractors(atts, cfg.out / "attractors");
    const auto bc = ctx.bench();
    const auto samples = compose ? cfg.compose_samples() : cfg.noise_samples();
    ctx.log << (compose ? "composition" : "noise robustness") << ": " << atts.size() << " attractors, " << samples
            << (compose ? " samples per pair\n" : " samples per attractor\n");
    const auto rep = compose ? run_composition(atts, samples, bc) : run_noise_robustness(atts, samples, bc);
    const std::string stem = compose ? "attractor_compose" : "attractor_noise";
    write_attractor_csv(cfg.out / (stem + ".csv"), rep.rows);
    ctx.emit(cfg.out / (stem + ".csv"));
    ctx.write_json(cfg.out / (stem + ".json"), {{"protocol", rep.protocol},
                                                {"samples", samples},
                                                {"epochs", bc.epochs},
                                                {"comparisons_per_epoch", rep.comparisons_per_epoch},
                                                {"summaries", summaries_json(rep.summaries)}});
    log_summaries(ctx.log, rep.summaries);
    return 0;
}

int run_motifs(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto atts = motif_attractors(cfg.seed);
    ctx.save_attractors(atts, cfg.out / "motif_attractors");
    const auto rep = run_motif_discrimination(atts, ctx.bench());
    write_attractor_csv(cfg.out / "attractor_motifs.csv", rep.rows);
    ctx.emit(cfg.out / "attractor_motifs.csv");
    ctx.write_json(cfg.out / "attractor_motifs.json", to_json(rep));
    for (const auto& s : rep.summaries)
        ctx.log << "  " << std::left << std::setw(11) << to_string(s.metric) << " within " << s.within << " across "
                << s.across << " gap " << s.gap << '\n';
    return 0;
}

int run_search(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto atts = benchmark_attractors(cfg.seed);
    for (const auto& a : atts) ctx.seeds[attractor_name(a)] = a.seed;
    auto bc = ctx.bench();
    bc.metrics = {Metric::Dsa};
    const auto search_seed = derive_seed(cfg.seed, 0x5ea4c);
    ctx.seeds["search"] = search_seed;
    std::size_t evaluated = 0;
    const auto inner = attractor_search_evaluator(atts, cfg.samples_per_candidate(), bc);
    SearchEvaluator eval = [&](const DsaConfig& d) {
        const auto r = inner(d);
        ctx.log << "  candidate " << ++evaluated << ": delays " << d.n_delays << " interval " << d.delay_interval
                << " gap " << r.gap << " R2 " << r.r2 << std::endl;
        return r;
    };
    const auto res = dsa_param_search(SearchBounds{}, cfg.rounds(), search_seed, eval, cfg.dsa);

    std::ostringstream csv;
    csv << "round,n_delays,delay_interval,gap,r2,score\n";
    json log = json::array();
    for (const auto& e : res.log) {
        csv << e.round << ',' << e.n_delays << ',' << e.delay_interval << ',' << fmt(e.gap) << ',' << fmt(e.r2) << ','
            << fmt(e.score) << '\n';
    }
    ctx.write_text(cfg.out / "dsa_search.csv", csv.str());
    ctx.write_json(cfg.out / "dsa_search.json", {{"rounds", cfg.rounds()},
                                                 {"samples", cfg.samples_per_candidate()},
                                                 {"candidates", res.log.size()},
                                                 {"best",
                                                  {{"n_delays", res.best.n_delays},
                                                   {"delay_interval", res.best.delay_interval}}}});
    ctx.log << "best: delays " << res.best.n_delays << " interval " << res.best.delay_interval << '\n';
    return 0;
}

json network_json(const NetworkRecord& r) {
    return {{"config_id", r.config.id},
            {"schedule", r.schedule.name},
            {"status", to_string(r.status)},
            {"pretrain_epochs", r.pretrain.epochs.size()},
            {"main_epochs", r.main.epochs.size()},
            {"final_accuracy", r.final_accuracy},
            {"final_trial_accuracy", r.final_trial_accuracy}};
}

void record_failures(Context& ctx, const BatteryStatus& st) {
    ctx.failures = {{"completed", st.completed},
                    {"not_converged", st.not_converged},
                    {"failed", st.failed},
                    {"pending", st.pending}};
}

int run_battery(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto dir = cfg.battery_dir();
    if (fs::exists(dir / "battery.json") && !cfg.resume)
        throw UsageError(dir.string() + " already holds a battery; pass --resume to continue it");
    auto bc = cfg.scale == Scale::Paper ? paper_battery(cfg.seed) : desk_battery(cfg.seed);
    bc.workers = cfg.workers;
    bc.epoch_budget = cfg.epoch_budget;
    for (const auto& c : bc.configs) {
        std::ostringstream name;
        name << 'c' << std::setw(2) << std::setfill('0') << c.id;
        ctx.seeds[name.str()] = network_init_seed(bc.seed, c.id);
    }
    ctx.log << "battery: " << bc.configs.size() << " configs x " << bc.schedules.size() << " schedules in " << dir
            << '\n';
    build_schedule_battery(bc, dir, [&](const std::string& line) { ctx.log << line << std::endl; });

    BatteryStore store(dir);
    const auto st = store.status();
    record_failures(ctx, st);
    std::ostringstream csv;
    csv << "config_id,schedule,status,pretrain_epochs,main_epochs,final_accuracy,final_trial_accuracy\n";
    json nets = json::array();
    for (const auto& r : store.records()) {
        csv << r.config.id << ',' << r.schedule.name << ',' << to_string(r.status) << ',' << r.pretrain.epochs.size()
            << ',' << r.main.epochs.size() << ',' << fmt(r.final_accuracy) << ',' << fmt(r.final_trial_accuracy)
            << '\n';
        nets.push_back(network_json(r));
    }
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) ctx.emit(e.path());
    ctx.write_text(cfg.out / "battery_networks.csv", csv.str());
    ctx.write_json(cfg.out / "battery_status.json", {{"status", ctx.failures}, {"networks", nets}});
    ctx.log << "completed " << st.completed << ", not converged " << st.not_converged << ", failed " << st.failed
            << ", pending " << st.pending << '\n';
    if (st.pending) ctx.log << "battery unfinished; rerun with --resume\n";
    return st.completed == store.records().size() ? 0 : 2;
}

struct Analysis {
    BatteryStore store;
    ScheduleAnalysis an;
    std::size_t excluded = 0;

    Analysis(const RunConfig& cfg, const fs::path& dir) : store(dir), an(store, analysis_config(cfg)) {
        const auto st = store.status();
        if (st.pending) throw ConfigError("battery in " + dir.string() + " is unfinished; resume rnn-battery first");
        excluded = st.failed + (cfg.include_unconverged ? 0 : st.not_converged);
    }

    static AnalysisConfig analysis_config(const RunConfig& cfg) {
        AnalysisConfig ac;
        ac.dsa = cfg.dsa;
        ac.workers = cfg.workers;
        ac.seed = cfg.seed;
        ac.include_unconverged = cfg.include_unconverged;
        return ac;
    }
};

int finish_analysis(Context& ctx, const Analysis& a) {
    record_failures(ctx, a.store.status());
    ctx.failures["excluded"] = a.excluded;
    ctx.seeds["analysis"] = ctx.cfg.seed;
    ctx.seeds["battery"] = a.store.config().seed;
    if (a.excluded) ctx.log << a.excluded << " networks excluded from the analysis\n";
    return a.excluded ? 2 : 0;
}

int run_compare(Context& ctx) {
    const auto& cfg = ctx.cfg;
    Analysis a(cfg, cfg.battery_dir());
    std::vector<ComparisonRecord> master, pairs;
    json metrics = json::object();
    for (auto m : cfg.metrics) {
        const auto mc = a.an.compare_to_master(m);
        const auto gm = a.an.cross_group_matrix(m);
        const auto ov = a.an.overlap_analysis(m);
        master.insert(master.end(), mc.records.begin(), mc.records.end());
        pairs.insert(pairs.end(), ov.records.begin(), ov.records.end());
        metrics[std::string(to_string(m))] = {
            {"groups", groups_json(mc.groups)}, {"matrix", to_json(gm)}, {"skipped", mc.skipped}};
        ctx.log << to_string(m) << " vs MASTER:\n";
        for (const auto& g : mc.groups) {
            ctx.log << "  " << std::left << std::setw(26) << to_string(g.group) << " n " << std::setw(4) << g.n
                    << " median " << std::setw(12) << g.median << " se " << g.se;
            if (g.vs_full) ctx.log << "  p_adj " << g.vs_full->adjusted_p;
            ctx.log << '\n';
        }
    }
    write_comparison_csv(cfg.out / "rnn_compare.csv", master);
    ctx.emit(cfg.out / "rnn_compare.csv");
    write_comparison_csv(cfg.out / "rnn_pairs.csv", pairs);
    ctx.emit(cfg.out / "rnn_pairs.csv");
    ctx.write_json(cfg.out / "rnn_compare.json", {{"metrics", metrics}});
    return finish_analysis(ctx, a);
}

json window_medians_json(const AccuracyGapReport& rep) {
    json out = json::object();
    for (const auto& [g, v] : rep.window_medians) {
        json rows = json::array();
        for (const auto& [d, gap] : v) rows.push_back({{"dissimilarity", d}, {"accuracy_gap", gap}});
        out[std::string(to_string(g))] = rows;
    }
    return out;
}

int run_accuracy(Context& ctx) {
    const auto& cfg = ctx.cfg;
    Analysis a(cfg, cfg.battery_dir());
    std::vector<ComparisonRecord> rows;
    json metrics = json::object();
    for (auto m : cfg.metrics) {
        const auto rep = a.an.accuracy_gap_analysis(m);
        rows.insert(rows.end(), rep.records.begin(), rep.records.end());
        metrics[std::string(to_string(m))] = {{"regression", to_json(rep.regression)},
                                              {"trial_regression", to_json(rep.trial_regression)},
                                              {"window_medians", window_medians_json(rep)}};
        ctx.log << to_string(m) << " on accuracy gap: slope " << rep.regression.slope << " p "
                << rep.regression.slope_p_value << " R2 " << rep.regression.r2 << " n " << rep.regression.n << '\n';
    }
    write_comparison_csv(cfg.out / "rnn_accuracy.csv", rows);
    ctx.emit(cfg.out / "rnn_accuracy.csv");
    ctx.write_json(cfg.out / "rnn_accuracy.json", {{"metrics", metrics}});
    return finish_analysis(ctx, a);
}

int run_overlap(Context& ctx) {
    const auto& cfg = ctx.cfg;
    Analysis a(cfg, cfg.battery_dir());
    std::vector<ComparisonRecord> rows, windows;
    json metrics = json::object();
    for (auto m : cfg.metrics) {
        const auto rep = a.an.overlap_analysis(m);
        const auto rc = a.an.rank_over_time(m);
        const auto win = a.an.accuracy_gap_analysis(m).records;
        rows.insert(rows.end(), rep.records.begin(), rep.records.end());
        windows.insert(windows.end(), win.begin(), win.end());
        metrics[std::string(to_string(m))] = {{"regression", to_json(rep.regression)}, {"rank_curves", to_json(rc)}};
        ctx.log << to_string(m) << " on overlap %: slope " << rep.regression.slope << " p "
                << rep.regression.slope_p_value << " R2 " << rep.regression.r2 << '\n';
    }
    write_comparison_csv(cfg.out / "rnn_overlap.csv", rows);
    ctx.emit(cfg.out / "rnn_overlap.csv");
    write_comparison_csv(cfg.out / "rnn_windows.csv", windows);
    ctx.emit(cfg.out / "rnn_windows.csv");
    ctx.write_json(cfg.out / "rnn_overlap.json",
                   {{"windows", a.store.config().windows.size()}, {"metrics", metrics}});
    return finish_analysis(ctx, a);
}

// Seed of an earlier run, read from its manifest; falls back to `fallback`.
std::uint64_t run_seed(const fs::path& dir, Protocol p, std::uint64_t fallback) {
    const auto path = dir / ("manifest_" + std::string(to_string(p)) + ".json");
    std::ifstream is(path);
    if (!is) return fallback;
    try {
        return json::parse(is).at("config").at("run.seed").get<std::uint64_t>();
    } catch (const json::exception&) {
        throw IoError("malformed manifest " + path.string());
    }
}

int run_report(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto in = cfg.input_dir();
    if (!fs::is_directory(in)) throw IoError("report input " + in.string() + " is not a directory");
    json rep = json::object();
    std::size_t found = 0;

    for (auto p : {Protocol::AttractorNoise, Protocol::AttractorCompose}) {
        const std::string stem = p == Protocol::AttractorNoise ? "attractor_noise" : "attractor_compose";
        if (!fs::exists(in / (stem + ".csv"))) continue;
        const auto rows = read_attractor_csv(in / (stem + ".csv"));
        const auto seed = run_seed(in, p, cfg.seed);
        ctx.seeds[std::string(to_string(p))] = seed;
        const auto ss = summarize_rows(rows, max_epoch(rows), seed);
        rep[std::string(to_string(p))] = {{"summaries", summaries_json(ss)}};
        ctx.log << to_string(p) << ":\n";
        log_summaries(ctx.log, ss);
        ++found;
    }
    if (fs::exists(in / "attractor_motifs.csv")) {
        const auto mr = summarize_motif_rows(read_attractor_csv(in / "attractor_motifs.csv"));
        rep["attractor-motifs"] = to_json(mr);
        ctx.log << "attractor-motifs:\n";
        for (const auto& s : mr.summaries)
            ctx.log << "  " << std::left << std::setw(11) << to_string(s.metric) << " within " << s.within
                    << " across " << s.across << " gap " << s.gap << '\n';
        ++found;
    }
    if (fs::exists(in / "rnn_compare.csv")) {
        const auto seed = run_seed(in, Protocol::RnnCompare, cfg.seed);
        ctx.seeds["rnn-compare"] = seed;
        const auto master = read_comparison_csv(in / "rnn_compare.csv");
        std::vector<ComparisonRecord> pairs;
        if (fs::exists(in / "rnn_pairs.csv")) pairs = read_comparison_csv(in / "rnn_pairs.csv");
        json metrics = json::object();
        for (auto m : metrics_in(master)) {
            const auto groups = summarize_master(only(master, m), metric_seed(seed, m));
            json j = {{"groups", groups_json(groups)}};
            if (!pairs.empty()) {
                auto gm = group_matrix(only(pairs, m));
                gm.metric = m;
                j["matrix"] = to_json(gm);
            }
            metrics[std::string(to_string(m))] = j;
            ctx.log << "rnn-compare " << to_string(m) << ":\n";
            for (const auto& g : groups)
                ctx.log << "  " << std::left << std::setw(26) << to_string(g.group) << " n " << std::setw(4) << g.n
                        << " median " << g.median << '\n';
        }
        rep["rnn-compare"] = {{"metrics", metrics}};
        ++found;
    }
    if (fs::exists(in / "rnn_accuracy.csv")) {
        const auto rows = read_comparison_csv(in / "rnn_accuracy.csv");
        json metrics = json::object();
        for (auto m : metrics_in(rows)) {
            const auto r = accuracy_regression(only(rows, m));
            metrics[std::string(to_string(m))] = {{"regression", to_json(r)}};
            ctx.log << "rnn-accuracy " << to_string(m) << ": slope " << r.slope << " p " << r.slope_p_value << '\n';
        }
        rep["rnn-accuracy"] = {{"metrics", metrics}};
        ++found;
    }
    if (fs::exists(in / "rnn_overlap.csv")) {
        const auto rows = read_comparison_csv(in / "rnn_overlap.csv");
        std::vector<ComparisonRecord> windows;
        if (fs::exists(in / "rnn_windows.csv")) windows = read_comparison_csv(in / "rnn_windows.csv");
        json metrics = json::object();
        for (auto m : metrics_in(rows)) {
            const auto r = overlap_regression(only(rows, m));
            json j = {{"regression", to_json(r)}};
            if (!windows.empty()) {
                const auto w = only(windows, m);
                j["rank_curves"] = to_json(rank_curves(w, max_window(w)));
            }
            metrics[std::string(to_string(m))] = j;
            ctx.log << "rnn-overlap " << to_string(m) << ": slope " << r.slope << " p " << r.slope_p_value << '\n';
        }
        rep["rnn-overlap"] = {{"metrics", metrics}};
        ++found;
    }
    if (!found) throw IoError("no protocol CSVs found in " + in.string());
    ctx.write_json(cfg.out / "report.json", rep);
    return 0;
}

int dispatch(Context& ctx) {
    switch (ctx.cfg.protocol) {
        case Protocol::AttractorNoise: return run_attractor_bench(ctx, false);
        case Protocol::AttractorCompose: return run_attractor_bench(ctx, true);
        case Protocol::AttractorMotifs: return run_motifs(ctx);
        case Protocol::DsaSearch: return run_search(ctx);
        case Protocol::RnnBattery: return run_battery(ctx);
        case Protocol::RnnCompare: return run_compare(ctx);
        case Protocol::RnnAccuracy: return run_accuracy(ctx);
        case Protocol::RnnOverlap: return run_overlap(ctx);
        case Protocol::Report: return run_report(ctx);
    }
    return 1;
}

}  // namespace

std::string_view to_string(Protocol p) noexcept {
    for (const auto& [k, v] : kProtocols)
        if (k == p) return v;
    return "?";
}

Protocol protocol_from_string(std::string_view s) {
    for (const auto& [k, v] : kProtocols)
        if (v == s) return k;
    throw ConfigError("unknown protocol '" + std::string(s) + "'");
}

std::string_view to_string(Scale s) noexcept { return s == Scale::Paper ? "paper" : "desk"; }

Scale scale_from_string(std::string_view s) {
    if (s == "desk") return Scale::Desk;
    if (s == "paper") return Scale::Paper;
    throw ConfigError("unknown scale '" + std::string(s) + "'");
}

// Desk scale: 20 of 200 noise samples, 10 of 200 composition samples, 3 of 5
// search rounds with 1 of 10 samples per candidate; the battery sizes live in
// desk_battery().
std::size_t RunConfig::noise_samples() const {
    return attractor_samples ? attractor_samples : (scale == Scale::Paper ? 200 : 20);
}
std::size_t RunConfig::compose_samples() const {
    return attractor_samples ? attractor_samples : (scale == Scale::Paper ? 200 : 10);
}
std::size_t RunConfig::rounds() const { return search_rounds ? search_rounds : (scale == Scale::Paper ? 5 : 3); }
std::size_t RunConfig::samples_per_candidate() const {
    return search_samples ? search_samples : (scale == Scale::Paper ? 10 : 1);
}
fs::path RunConfig::battery_dir() const { return battery.empty() ? out / "battery" : battery; }
fs::path RunConfig::input_dir() const { return report_input.empty() ? out : report_input; }

json RunConfig::to_json() const {
    json metric_names = json::array();
    for (auto m : metrics) metric_names.push_back(to_string(m));
    return {{"run.protocol", cli::to_string(protocol)},
            {"run.scale", cli::to_string(scale)},
            {"run.seed", seed},
            {"run.metrics", metric_names},
            {"run.out", out.string()},
            {"run.workers", workers},
            {"run.resume", resume},
            {"dsa.n_delays", dsa.n_delays},
            {"dsa.delay_interval", dsa.delay_interval},
            {"dsa.rank_tolerance", dsa.rank_tolerance},
            {"attractor.samples", attractor_samples},
            {"search.rounds", search_rounds},
            {"search.samples", search_samples},
            {"rnn.battery", battery.string()},
            {"rnn.include_unconverged", include_unconverged},
            {"rnn.epoch_budget", epoch_budget},
            {"report.input", report_input.string()}};
}

std::vector<std::string> apply_config_file(RunConfig& cfg, const fs::path& path) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        throw UsageError("cannot read config file " + path.string() + ": " + e.message());
    }
    std::vector<std::string> set;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw UsageError("unknown key '" + section + "' in " + path.string());
        for (const auto& [name, value] : body) {
            const auto full = section + "." + name;
            const auto* k = find_key(full);
            if (!k || !value.empty()) throw UsageError("unknown key '" + full + "' in " + path.string());
            k->set(cfg, value.data());
            set.push_back(full);
        }
    }
    return set;
}

RunConfig parse_config(const std::vector<std::string>& args, const char* env_seed, std::optional<InfoRequest>* info) {
    CLI::App app{"Benchmarks for dynamical representation-similarity metrics", "dynabench"};
    app.set_version_flag("--version", std::string(kVersion));
    std::string config_path;
    app.add_option("--config", config_path, "key-value config file with [section] headers")
        ->check(CLI::ExistingFile);
    const auto& ks = keys();
    std::vector<std::string> values(ks.size());
    std::deque<bool> switches(ks.size(), false);
    std::vector<CLI::Option*> opts(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const auto help = ks[i].help + " (" + ks[i].name + ")";
        opts[i] = ks[i].is_flag ? app.add_flag(ks[i].flag, switches[i], help) : app.add_option(ks[i].flag, values[i], help);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0 && info) {
            std::string text = dynamic_cast<const CLI::CallForVersion*>(&e) ? std::string(kVersion) + "\n" : app.help();
            *info = InfoRequest{std::move(text)};
            return {};
        }
        throw UsageError(e.what());
    }

    RunConfig cfg;
    bool have_protocol = false;
    if (env_seed && *env_seed) cfg.seed = parse_seed("DYNABENCH_SEED", env_seed);
    if (!config_path.empty()) {
        const auto set = apply_config_file(cfg, config_path);
        have_protocol = std::find(set.begin(), set.end(), "run.protocol") != set.end();
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (opts[i]->count() == 0) continue;
        ks[i].set(cfg, ks[i].is_flag ? (switches[i] ? "true" : "false") : values[i]);
        if (ks[i].name == "run.protocol") have_protocol = true;
    }
    if (!have_protocol) throw UsageError("missing protocol: pass --protocol or set run.protocol");
    validate(cfg);
    return cfg;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> md(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!md || EVP_DigestInit_ex(md.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
    std::array<char, 1 << 16> buf{};
    while (is) {
        is.read(buf.data(), buf.size());
        if (is.gcount() > 0) EVP_DigestUpdate(md.get(), buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(md.get(), digest.data(), &len);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

RunResult execute(const RunConfig& cfg, std::ostream& log) {
    RunResult res;
    auto& man = res.manifest;
    man = {{"tool", "dynabench"},
           {"version", std::string(kVersion)},
           {"protocol", to_string(cfg.protocol)},
           {"config", cfg.to_json()},
           {"started", utc_now()}};
    Context ctx{cfg, log, {}, json::object(), json::object()};
    try {
        fs::create_directories(cfg.out);
        res.status = dispatch(ctx);
    } catch (const std::exception& e) {
        res.status = 1;
        man["error"] = e.what();
        log << "error: " << e.what() << '\n';
    }
    man["finished"] = utc_now();
    man["status"] = res.status;
    man["seeds"] = ctx.seeds;
    man["failures"] = ctx.failures;
    json outputs = json::array();
    for (const auto& p : ctx.outputs) {
        std::error_code ec;
        if (!fs::is_regular_file(p, ec)) continue;
        try {
            outputs.push_back({{"path", fs::relative(p, cfg.out).generic_string()},
                               {"bytes", fs::file_size(p)},
                               {"sha256", sha256_file(p)}});
        } catch (const std::exception& e) {
            log << "error: " << e.what() << '\n';
            res.status = 1;
        }
    }
    man["outputs"] = outputs;
    const auto path = cfg.out / ("manifest_" + std::string(to_string(cfg.protocol)) + ".json");
    std::ofstream os(path, std::ios::binary);
    os << man.dump(2) << '\n';
    if (!os) {
        log << "error: cannot write " << path.string() << '\n';
        res.status = 1;
    }
    return res;
}

}  // namespace dynabench::cli

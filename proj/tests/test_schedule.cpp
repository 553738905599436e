#include "doctest.h"

#include "dynabench/error.hpp"
#include "dynabench/schedule_bench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

using namespace dynabench;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("dynabench_" + name)) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// Two small configs with short stages. `accuracy` 0 makes every stage stop
// after its first epoch.
BatteryConfig tiny_battery(double accuracy, std::size_t epochs) {
    BatteryConfig cfg;
    for (int id : {3, 9}) {
        NetConfig c;
        c.id = id;
        c.cell = id == 3 ? CellKind::LeakyRnn : CellKind::LeakyGru;
        c.hidden = 24;
        c.batch = 16;
        c.lr = 1e-2;
        cfg.configs.push_back(c);
    }
    cfg.stop = {accuracy, epochs, 32, 16};
    cfg.seed = 5;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Every file under `root`, relative path -> bytes.
std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

ComparisonRecord rec(const std::string& a, double d, double gap = 0.0, std::size_t window = 0, int config = 1) {
    ComparisonRecord r;
    r.config_id = config;
    r.group_a = a;
    r.group_b = "MASTER";
    r.window = window;
    r.dissimilarity = d;
    r.accuracy_gap = gap;
    r.rank = schedule_from_name(a).pretrain_rank();
    return r;
}

}  // namespace

TEST_CASE("default battery schedules") {
    const auto s = default_schedules();
    REQUIRE(s.size() == 8);
    std::vector<std::string> names;
    for (const auto& x : s) names.push_back(x.name);
    CHECK(names == std::vector<std::string>{"MASTER", "MASTER_FROZEN", "UNTRAINED", "PARTIAL_A", "PARTIAL_C",
                                            "PARTIAL_BC", "FULL", "FULL_UNFROZEN"});
    for (const auto& x : s) {
        CHECK(schedule_from_name(x.name).task_set() == x.task_set());
        CHECK(schedule_from_name(x.name).freeze_after_pretrain == x.freeze_after_pretrain);
        if (x.group == ScheduleGroup::FullPretraining || x.group == ScheduleGroup::FullPretrainingUnfrozen)
            CHECK(x.pretrain_tasks == std::vector<TaskKind>{TaskKind::A, TaskKind::B, TaskKind::C});
        if (x.group == ScheduleGroup::Master || x.group == ScheduleGroup::MasterFrozen) CHECK(x.pretrain_tasks.empty());
    }
    CHECK(s[2].task_set().empty());
    CHECK(s[5].pretrain_rank() == doctest::Approx(2.0 / 3.0));
    CHECK(s[3].pretrain_rank() == doctest::Approx(1.0 / 3.0));
    CHECK(s[6].pretrain_rank() == 1.0);

    CHECK_THROWS_AS(make_schedule(ScheduleGroup::PartialPretraining, {}), ConfigError);
    CHECK_THROWS_AS(make_schedule(ScheduleGroup::PartialPretraining, {TaskKind::A, TaskKind::B, TaskKind::C}),
                    ConfigError);
    CHECK_THROWS_AS(make_schedule(ScheduleGroup::Master, {TaskKind::A}), ConfigError);
    CHECK_THROWS_AS(make_schedule(ScheduleGroup::PartialPretraining, {TaskKind::M}), ConfigError);
    CHECK_THROWS_AS(schedule_from_name("PARTIAL_"), ConfigError);
    CHECK_THROWS_AS(schedule_from_name("SOMETHING"), ConfigError);
    for (auto g : kAllGroups) CHECK(group_from_string(to_string(g)) == g);
}

TEST_CASE("task overlap") {
    const auto a = make_schedule(ScheduleGroup::PartialPretraining, {TaskKind::A});
    const auto m = make_schedule(ScheduleGroup::Master);
    const auto ac = make_schedule(ScheduleGroup::PartialPretraining, {TaskKind::A, TaskKind::C});
    CHECK(task_overlap(a, m) == 0.5);
    CHECK(task_overlap(a, ac) == doctest::Approx(2.0 / 3.0));
    const auto all = default_schedules();
    for (const auto& x : all) {
        CHECK(task_overlap(x, x) == 1.0);
        for (const auto& y : all) {
            const double o = task_overlap(x, y);
            CHECK(o >= 0.0);
            CHECK(o <= 1.0);
            CHECK(o == task_overlap(y, x));
        }
    }
    CHECK(task_overlap(all[2], all[0]) == 0.0);  // UNTRAINED sees no task
}

TEST_CASE("desk and paper battery sizes") {
    const auto desk = desk_battery(1);
    REQUIRE(desk.configs.size() == 4);
    std::set<std::pair<CellKind, Activation>> kinds;
    for (const auto& c : desk.configs) {
        CHECK(c.hidden == 64);
        CHECK(c.activation != Activation::Softplus);
        kinds.insert({c.cell, c.activation});
    }
    CHECK(kinds.size() == 4);
    CHECK(desk.schedules.size() == 8);
    CHECK(desk.stop.trials_per_epoch == 2000);
    CHECK(desk.stop.max_epochs == 20);
    const auto paper = paper_battery(1);
    CHECK(paper.configs.size() * paper.schedules.size() == 576);
    CHECK(paper.stop.max_epochs == 50);
    CHECK(paper.stop.trials_per_epoch == 10000);

    // The six windows tile (10%, 100%] without gaps or overlap.
    const auto w = desk.windows;
    REQUIRE(w.size() == 6);
    CHECK(w.front().begin == doctest::Approx(0.10));
    CHECK(w.back().end == doctest::Approx(1.0));
    for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i].begin == w[i - 1].end);
}

TEST_CASE("battery training, freezing and storage") {
    TempDir dir("battery");
    auto cfg = tiny_battery(0.99, 3);
    const auto st = build_schedule_battery(cfg, dir.path);
    CHECK(st.finished());
    BatteryStore store(dir.path);
    REQUIRE(store.records().size() == 16);

    for (const auto& r : store.records()) {
        CHECK(r.status != NetStatus::Pending);
        if (r.status == NetStatus::Failed) continue;
        REQUIRE(r.windows.size() == 6);
        CHECK(r.window_accuracy.size() == 6);
        if (r.schedule.main_task) {
            CHECK(r.final_epoch == r.main.epochs.size());
            CHECK(r.pretrain.epochs.empty() == r.schedule.pretrain_tasks.empty());
        }
    }

    const auto init = NetParams::initialize(cfg.configs[0], network_init_seed(cfg.seed, 3));
    const auto* untrained = store.find(3, "UNTRAINED");
    REQUIRE(untrained);
    CHECK(untrained->completed());
    CHECK(store.params(*untrained, 0) == init);
    CHECK(store.params(*untrained, 4) == init);

    // Input-only main stage from initialization: everything else untouched.
    const auto* frozen = store.find(3, "MASTER_FROZEN");
    REQUIRE(frozen);
    const auto p = store.params(*frozen, 0);
    CHECK(p.w_rec == init.w_rec);
    CHECK(p.b == init.b);
    CHECK(p.w_out == init.w_out);
    CHECK(p.b_out == init.b_out);
    CHECK(p.w_in != init.w_in);

    const auto* master = store.find(3, "MASTER");
    REQUIRE(master);
    CHECK(store.params(*master, 0).w_rec != init.w_rec);

    // FULL: the main stage only moves input weights away from the pretrained state.
    const auto* full = store.find(9, "FULL");
    REQUIRE(full);
    const auto w1 = store.params(*full, 1);
    const auto wf = store.params(*full, 0);
    CHECK(w1.w_rec == wf.w_rec);
    CHECK(w1.w_out == wf.w_out);

    // None of these tiny networks reach the target, so only UNTRAINED is
    // analyzable unless unconverged networks are let in.
    if (store.status().completed == 2) {
        AnalysisConfig ac;
        ac.extraction_trials = 8;
        ScheduleAnalysis strict(store, ac);
        const auto mc = strict.compare_to_master(Metric::Cka);
        CHECK(mc.records.empty());
        CHECK(mc.skipped == 2);
        ac.include_unconverged = true;
        ScheduleAnalysis loose(store, ac);
        CHECK(loose.compare_to_master(Metric::Cka).records.size() == 16 - store.status().failed);
    }

    // Reopening with a different configuration is refused.
    auto other = cfg;
    other.seed = 6;
    CHECK_THROWS_AS(build_schedule_battery(other, dir.path), ConfigError);
    // A finished store is left alone.
    const auto before = tree(dir.path);
    build_schedule_battery(cfg, dir.path);
    CHECK(tree(dir.path) == before);
}

TEST_CASE("interrupted battery resumes to the uninterrupted result") {
    TempDir a("resume_a"), b("resume_b");
    auto cfg = tiny_battery(0.99, 3);
    cfg.configs.resize(1);
    build_schedule_battery(cfg, a.path);

    auto partial = cfg;
    partial.epoch_budget = 2;
    std::size_t calls = 0;
    while (!build_schedule_battery(partial, b.path).finished()) {
        ++calls;
        REQUIRE(calls < 100);
    }
    CHECK(calls > 3);
    CHECK(tree(a.path) == tree(b.path));

    // Worker count does not change the outcome.
    TempDir c("resume_c");
    auto threaded = cfg;
    threaded.workers = 3;
    build_schedule_battery(threaded, c.path);
    CHECK(tree(a.path) == tree(c.path));
}

TEST_CASE("dynamics extraction") {
    NetConfig cfg;
    cfg.hidden = 128;
    const auto trials = extraction_trials(1);
    REQUIRE(trials.size() == 200);
    for (const auto& t : trials) CHECK(t.steps() == 325);
    const auto params = NetParams::initialize(cfg, 3);
    const auto x = extract_dynamics(params, cfg, trials);
    CHECK(x.conditions() == 200);
    CHECK(x.steps() == 200);
    CHECK(x.units() == 20);
    const auto y = extract_dynamics(params, cfg, trials);
    CHECK(x.values() == y.values());
    DsaConfig dsa;
    for (auto m : {Metric::Cka, Metric::Procrustes, Metric::Dsa})
        CHECK(std::abs(dissimilarity(m, x, y, dsa).value) <= 1e-12);
}

TEST_CASE("analysis over a battery") {
    TempDir dir("analysis");
    auto cfg = tiny_battery(0.0, 3);
    build_schedule_battery(cfg, dir.path);
    BatteryStore store(dir.path);
    for (const auto& r : store.records()) CHECK(r.completed());

    AnalysisConfig ac;
    ac.extraction_trials = 12;
    ac.dsa.n_delays = 4;
    ac.dsa.delay_interval = 10;
    ac.dsa.restarts = 2;
    ac.seed = 2;
    ScheduleAnalysis an(store, ac);

    for (auto metric : {Metric::Cka, Metric::Procrustes, Metric::Dsa}) {
        const auto mc = an.compare_to_master(metric);
        CHECK(mc.records.size() == 16);  // 8 schedules x 2 configs, MASTER itself included
        CHECK(mc.skipped == 0);
        for (const auto& r : mc.records) {
            CHECK(r.group_b == "MASTER");
            CHECK(r.metric == metric);
            if (r.group_a == "MASTER") CHECK(r.dissimilarity == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
        }
        REQUIRE(mc.group(ScheduleGroup::PartialPretraining));
        CHECK(mc.group(ScheduleGroup::PartialPretraining)->n == 6);

        const auto m = an.cross_group_matrix(metric);
        REQUIRE(m.median.rows() == 6);
        for (Eigen::Index i = 0; i < 6; ++i) {
            CHECK(m.median(i, i) == 0.0);
            for (Eigen::Index j = 0; j < 6; ++j)
                if (i != j) CHECK(m.median(i, j) == m.median(j, i));
        }
    }

    const auto acc = an.accuracy_gap_analysis(Metric::Cka);
    CHECK(acc.records.size() == 2 * 8 * 6);
    for (const auto& r : acc.records) {
        CHECK(r.window >= 1);
        CHECK(r.window <= 6);
        CHECK(r.accuracy_gap >= 0.0);
        CHECK(r.accuracy_gap <= 1.0);
        CHECK(store.find(r.config_id, r.group_a)->config.id == store.find(r.config_id, r.group_b)->config.id);
    }
    CHECK(acc.regression.n == acc.records.size());

    const auto ov = an.overlap_analysis(Metric::Cka);
    CHECK(ov.records.size() == 2 * 28);
    for (const auto& r : ov.records) CHECK(r.overlap == task_overlap(schedule_from_name(r.group_a), schedule_from_name(r.group_b)));

    const auto rc = an.rank_over_time(Metric::Cka);
    CHECK(rc.ranks.size() == 4);
    for (const auto& curve : rc.median) CHECK(curve.size() == 6);

    // Records survive the CSV round trip.
    const auto csv = dir.path / "cmp.csv";
    write_comparison_csv(csv, acc.records);
    const auto back = read_comparison_csv(csv);
    REQUIRE(back.size() == acc.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].dissimilarity == acc.records[i].dissimilarity);
        CHECK(back[i].accuracy_gap == acc.records[i].accuracy_gap);
        CHECK(back[i].seed == acc.records[i].seed);
        CHECK(back[i].group_a == acc.records[i].group_a);
    }
    const auto again = accuracy_regression(back);
    CHECK(again.slope == acc.regression.slope);
    CHECK(again.r2 == acc.regression.r2);
}

TEST_CASE("master summaries against hand-computed medians") {
    std::vector<ComparisonRecord> rs{
        rec("MASTER", 0.0),       rec("MASTER", 0.0, 0, 0, 2), rec("UNTRAINED", 0.9),   rec("UNTRAINED", 0.7),
        rec("UNTRAINED", 0.8),    rec("PARTIAL_A", 0.5),       rec("PARTIAL_BC", 0.45), rec("PARTIAL_C", 0.6),
        rec("FULL", 0.2),         rec("FULL", 0.3),            rec("FULL", 0.25),       rec("FULL_UNFROZEN", 0.22),
        rec("FULL_UNFROZEN", 0.28)};
    const auto groups = summarize_master(rs, 3, 200);
    auto find = [&](ScheduleGroup g) {
        for (const auto& s : groups)
            if (s.group == g) return s;
        FAIL("missing group");
        return GroupSummary{};
    };
    CHECK(find(ScheduleGroup::Master).median == 0.0);
    CHECK(find(ScheduleGroup::Untrained).median == doctest::Approx(0.8));
    CHECK(find(ScheduleGroup::PartialPretraining).median == doctest::Approx(0.5));
    CHECK(find(ScheduleGroup::PartialPretraining).n == 3);
    CHECK(find(ScheduleGroup::FullPretraining).median == doctest::Approx(0.25));
    CHECK_FALSE(find(ScheduleGroup::FullPretraining).vs_full);
    CHECK_FALSE(find(ScheduleGroup::Master).vs_full);

    // Three tests (UNTRAINED, PARTIAL, FULL_UNFROZEN); BH by hand on the raw p.
    const auto u = *find(ScheduleGroup::Untrained).vs_full;
    const auto p = *find(ScheduleGroup::PartialPretraining).vs_full;
    const auto f = *find(ScheduleGroup::FullPretrainingUnfrozen).vs_full;
    std::vector<double> raw{u.raw_p, p.raw_p, f.raw_p};
    std::vector<double> sorted = raw;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> adj(3);
    adj[2] = sorted[2];
    adj[1] = std::min(adj[2], sorted[1] * 3.0 / 2.0);
    adj[0] = std::min(adj[1], sorted[0] * 3.0);
    auto adjusted_of = [&](double r) { return adj[static_cast<std::size_t>(std::find(sorted.begin(), sorted.end(), r) - sorted.begin())]; };
    CHECK(u.adjusted_p == doctest::Approx(adjusted_of(u.raw_p)));
    CHECK(p.adjusted_p == doctest::Approx(adjusted_of(p.raw_p)));
    CHECK(f.adjusted_p == doctest::Approx(adjusted_of(f.raw_p)));
    CHECK(u.t_statistic > 0.0);
    CHECK(u.adjusted_p < 0.05);
}

TEST_CASE("rank curves and degenerate regressions") {
    std::vector<ComparisonRecord> rs;
    // FULL falls 0.5 -> 0.2, MASTER_FROZEN rises 0.1 -> 0.4; FULL_UNFROZEN and
    // UNTRAINED are not part of the rank analysis.
    for (std::size_t w = 1; w <= 3; ++w) {
        rs.push_back(rec("FULL", 0.5 - 0.15 * static_cast<double>(w - 1), 0, w));
        rs.push_back(rec("MASTER_FROZEN", 0.1 + 0.15 * static_cast<double>(w - 1), 0, w));
        rs.push_back(rec("PARTIAL_A", 0.3, 0, w));
        rs.push_back(rec("PARTIAL_C", 0.5, 0, w));
        rs.push_back(rec("FULL_UNFROZEN", 9.0, 0, w));
        rs.push_back(rec("UNTRAINED", 9.0, 0, w));
    }
    const auto rc = rank_curves(rs, 3);
    CHECK(rc.median[3][0] == doctest::Approx(0.5));
    CHECK(rc.median[3][2] == doctest::Approx(0.2));
    CHECK(*rc.trend[3] == doctest::Approx(-0.3));
    CHECK(*rc.trend[0] == doctest::Approx(0.3));
    CHECK(rc.median[1][1] == doctest::Approx(0.4));
    CHECK(std::isnan(rc.median[2][0]));
    CHECK_FALSE(rc.trend[2]);

    const auto single = rank_curves(rs, 1);
    CHECK(single.median[3].size() == 1);
    for (const auto& t : single.trend) CHECK_FALSE(t);

    // Identical networks everywhere: zero gaps and zero dissimilarities.
    std::vector<ComparisonRecord> same(12, rec("MASTER", 0.0));
    const auto r = accuracy_regression(same);
    CHECK(r.degenerate);
    CHECK(r.n == 12);
    for (auto& x : same) x.overlap = 1.0;
    CHECK(overlap_regression(same).degenerate);
}

#include "doctest.h"

#include "cli.hpp"
#include "dynabench/attractor_bench.hpp"
#include "dynabench/random.hpp"
#include "dynabench/schedule_bench.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace dynabench;
using namespace dynabench::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("dynabench_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::binary);
    os << s;
}

std::string usage_error(const std::vector<std::string>& args, const char* env = nullptr) {
    try {
        parse_config(args, env);
    } catch (const UsageError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("flags give a valid config") {
    const auto c = parse_config({"--protocol", "attractor-noise", "--scale", "desk", "--seed", "7"}, nullptr);
    CHECK(c.protocol == Protocol::AttractorNoise);
    CHECK(c.scale == Scale::Desk);
    CHECK(c.seed == 7);
    CHECK(c.metrics.size() == 3);
    CHECK(c.noise_samples() == 20);
    CHECK(c.compose_samples() == 10);

    const auto p = parse_config({"--protocol=rnn-overlap", "--scale=paper", "--metrics", "dsa,cka", "--workers", "3",
                                 "--resume", "--dsa-n-delays", "10"},
                                nullptr);
    CHECK(p.protocol == Protocol::RnnOverlap);
    CHECK(p.noise_samples() == 200);
    CHECK(p.metrics == std::vector<Metric>{Metric::Cka, Metric::Dsa});
    CHECK(p.workers == 3);
    CHECK(p.resume);
    CHECK(p.dsa.n_delays == 10);
    CHECK(p.battery_dir() == fs::path("results") / "battery");

    std::optional<InfoRequest> info;
    parse_config({"--help"}, nullptr, &info);
    REQUIRE(info);
    CHECK(info->text.find("--protocol") != std::string::npos);
}

TEST_CASE("usage errors") {
    CHECK(usage_error({"--seed", "3"}).find("missing protocol") != std::string::npos);
    CHECK(usage_error({"--protocol", "nope"}).find("run.protocol") != std::string::npos);
    CHECK(usage_error({"--protocol", "report", "--seed", "x7"}).find("run.seed") != std::string::npos);
    CHECK(usage_error({"--protocol", "report", "--workers", "0"}).find("run.workers") != std::string::npos);
    CHECK(usage_error({"--protocol", "report", "--metrics", "CKA,RSA"}).find("RSA") != std::string::npos);
    CHECK(usage_error({"--protocol", "report", "--dsa-rank-tolerance", "1.5"}).find("DSA") != std::string::npos);
    CHECK(usage_error({"--protocol", "report", "--bogus"}) != "");
    CHECK(usage_error({"--protocol", "report"}, "seven").find("DYNABENCH_SEED") != std::string::npos);
}

TEST_CASE("config file keys and precedence") {
    TempDir dir("config");
    const auto file = (dir.path / "run.ini").string();
    write(file, "[run]\nprotocol = attractor-motifs\nseed = 1\nworkers = 2\n[dsa]\ndelay_interval = 4\n");

    const auto c = parse_config({"--config", file}, "99");
    CHECK(c.protocol == Protocol::AttractorMotifs);
    CHECK(c.seed == 1);  // file beats the environment
    CHECK(c.workers == 2);
    CHECK(c.dsa.delay_interval == 4);

    const auto f = parse_config({"--config", file, "--seed", "7", "--workers", "1"}, "99");
    CHECK(f.seed == 7);
    CHECK(f.workers == 1);

    write(file, "[run]\nprotocol = report\n");
    CHECK(parse_config({"--config", file}, "99").seed == 99);
    CHECK(parse_config({"--protocol", "report"}, nullptr).seed == 0);

    write(file, "[run]\nprotocol = report\nfoo = 1\n");
    CHECK(usage_error({"--config", file}).find("foo") != std::string::npos);
    write(file, "[extra]\nfoo = 1\n");
    CHECK(usage_error({"--config", file, "--protocol", "report"}).find("foo") != std::string::npos);
    write(file, "foo = 1\n");
    CHECK(usage_error({"--config", file, "--protocol", "report"}).find("foo") != std::string::npos);
    write(file, "[rnn]\nepoch_budget = -1\n");
    CHECK(usage_error({"--config", file, "--protocol", "report"}).find("rnn.epoch_budget") != std::string::npos);
    write(file, "[rnn]\ninclude_unconverged = true\n");
    CHECK(parse_config({"--config", file, "--protocol", "report"}, nullptr).include_unconverged);
}

TEST_CASE("attractor-noise run: outputs, manifest, determinism and report") {
    TempDir a("noise_a"), b("noise_b");
    RunConfig cfg = parse_config({"--protocol", "attractor-noise", "--seed", "7", "--attractor-samples", "1"}, nullptr);
    std::ostringstream log;
    cfg.out = a.path;
    const auto ra = execute(cfg, log);
    cfg.out = b.path;
    cfg.workers = 3;
    const auto rb = execute(cfg, log);
    CHECK(ra.status == 0);
    CHECK(rb.status == 0);
    CHECK(slurp(a.path / "attractor_noise.csv") == slurp(b.path / "attractor_noise.csv"));
    CHECK(slurp(a.path / "attractor_noise.json") == slurp(b.path / "attractor_noise.json"));

    const auto man = nlohmann::json::parse(slurp(a.path / "manifest_attractor-noise.json"));
    CHECK(man.at("status") == 0);
    CHECK(man.at("config").at("run.seed") == 7);
    CHECK(man.at("seeds").size() == 7);
    std::size_t listed = 0;
    for (const auto& o : man.at("outputs")) {
        const auto p = a.path / o.at("path").get<std::string>();
        CHECK(o.at("sha256") == sha256_file(p));
        ++listed;
    }
    CHECK(listed == 16);  // CSV, JSON and 7 attractors with sidecars

    // SHA-256 of "abc".
    write(a.path / "abc.txt", "abc");
    CHECK(sha256_file(a.path / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

    // Report recomputes the summaries from the CSV alone.
    RunConfig rep = parse_config({"--protocol", "report", "--seed", "123"}, nullptr);
    rep.out = b.path / "report";
    rep.report_input = a.path;
    REQUIRE(execute(rep, log).status == 0);
    const auto in_process = nlohmann::json::parse(slurp(a.path / "attractor_noise.json"));
    const auto recomputed = nlohmann::json::parse(slurp(rep.out / "report.json"));
    CHECK(recomputed.at("attractor-noise").at("summaries") == in_process.at("summaries"));
}

TEST_CASE("report recomputes schedule summaries from CSVs") {
    TempDir dir("report");
    std::vector<ComparisonRecord> rows;
    Rng rng(3);
    std::normal_distribution<double> noise(0.0, 0.05);
    int config = 1;
    for (const char* g : {"MASTER", "MASTER_FROZEN", "UNTRAINED", "PARTIAL_A", "PARTIAL_BC", "FULL", "FULL_UNFROZEN"}) {
        for (int k = 0; k < 5; ++k) {
            for (std::size_t w = 1; w <= 3; ++w) {
                ComparisonRecord r;
                r.config_id = config + k;
                r.group_a = g;
                r.group_b = "MASTER";
                r.window = w;
                r.rank = schedule_from_name(g).pretrain_rank();
                r.dissimilarity = 0.3 + 0.1 * r.rank + noise(rng) - 0.02 * static_cast<double>(w);
                r.accuracy_gap = std::abs(noise(rng));
                rows.push_back(r);
            }
        }
    }
    write_comparison_csv(dir.path / "rnn_compare.csv", rows);
    write_comparison_csv(dir.path / "rnn_accuracy.csv", rows);
    write_comparison_csv(dir.path / "rnn_windows.csv", rows);
    write_comparison_csv(dir.path / "rnn_overlap.csv", rows);
    write(dir.path / "manifest_rnn-compare.json", R"({"config": {"run.seed": 41}})");

    RunConfig rep = parse_config({"--protocol", "report", "--seed", "5"}, nullptr);
    rep.out = dir.path;
    std::ostringstream log;
    REQUIRE(execute(rep, log).status == 0);
    const auto j = nlohmann::json::parse(slurp(dir.path / "report.json"));

    const auto groups = summarize_master(rows, derive_seed(41, static_cast<std::uint64_t>(Metric::Dsa)));
    const auto& jg = j.at("rnn-compare").at("metrics").at("DSA").at("groups");
    REQUIRE(jg.size() == groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        CHECK(jg[i].at("median").get<double>() == groups[i].median);
        CHECK(jg[i].at("se").get<double>() == groups[i].se);
    }
    const auto reg = accuracy_regression(rows);
    CHECK(j.at("rnn-accuracy").at("metrics").at("DSA").at("regression").at("slope").get<double>() == reg.slope);
    const auto rc = rank_curves(rows, 3);
    const auto& curves = j.at("rnn-overlap").at("metrics").at("DSA").at("rank_curves");
    REQUIRE(curves.size() == rc.ranks.size());
    CHECK(curves[3].at("trend").get<double>() == *rc.trend[3]);
}

TEST_CASE("failures exit 1 with a partial manifest") {
    TempDir dir("fail");
    std::ostringstream log;
    RunConfig cfg = parse_config({"--protocol", "rnn-compare"}, nullptr);
    cfg.out = dir.path / "out";
    const auto r = execute(cfg, log);
    CHECK(r.status == 1);
    CHECK(r.manifest.contains("error"));
    CHECK(fs::exists(cfg.out / "manifest_rnn-compare.json"));

    // An existing battery is only continued on request.
    fs::create_directories(cfg.out / "battery");
    write(cfg.out / "battery" / "battery.json", "{}");
    cfg.protocol = Protocol::RnnBattery;
    CHECK(execute(cfg, log).status == 1);
    CHECK(log.str().find("--resume") != std::string::npos);

    // Output directory that cannot be created.
    write(dir.path / "file", "x");
    cfg.out = dir.path / "file" / "sub";
    cfg.protocol = Protocol::AttractorMotifs;
    CHECK(execute(cfg, log).status == 1);

    RunConfig rep = parse_config({"--protocol", "report"}, nullptr);
    rep.out = dir.path / "empty";
    CHECK(execute(rep, log).status == 1);
}

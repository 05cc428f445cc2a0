#include "cli_app.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hsps/serialize.hpp"

namespace fs = std::filesystem;
using hsps::Json;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "hsps");
    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    Result r;
    r.code = hsps::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    ADD_FAILURE() << "no column " << name;
    return 0;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("hsps_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& text) const {
        std::ofstream(dir_ / name) << text;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, AnalyticAshHeadline) {
    const Result r = run({"analytic", "eta-ash", "--qyx", "0.61", "--qybx", "0.7", "--alpha", "1", "--tr", "0"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = parse_csv(r.out);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_NEAR(std::stod(rows[1][column(rows[0], "efficiency")]), 0.427, 1e-12);
}

TEST_F(CliTest, AnalyticSweepCsvMatchesJson) {
    const std::vector<std::string> base{"analytic", "eta-timed", "--preset", "model-system", "--sweep", "tc",
                                        "--from", "0.1", "--to", "2", "--step", "0.1"};
    const Result csv = run(base);
    std::vector<std::string> as_json = base;
    as_json.insert(as_json.end(), {"--format", "json"});
    const Result js = run(as_json);
    ASSERT_EQ(csv.code, 0) << csv.err;
    ASSERT_EQ(js.code, 0) << js.err;
    const auto rows = parse_csv(csv.out);
    const Json j = Json::parse(js.out);
    ASSERT_EQ(rows.size(), 21u);
    ASSERT_EQ(j.size(), 20u);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[0].size(); ++c) {
            const double x = std::stod(rows[r][c]);
            const double y = j[r - 1][rows[0][c]].get<double>();
            EXPECT_LE(std::abs(x - y), 1e-12 * std::max(1.0, std::abs(x)));
        }
    }
}

TEST_F(CliTest, AnalyticUnreachableGateIsSolverError) {
    const Result r = run({"analytic", "tgf-gate", "--qyx", "0.2", "--qybx", "1", "--tau-x", "1", "--tau-bx", "1.25"});
    EXPECT_EQ(r.code, 3);
    const Json body = Json::parse(r.err);
    EXPECT_EQ(body["error"]["kind"], "no_solution");
}

TEST_F(CliTest, BudgetResponseTime) {
    Result r = run({"budget", "response-time", "--detector", "snspd", "--layout", "on-chip"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto rows = parse_csv(r.out);
    EXPECT_EQ(rows[1][column(rows[0], "response_time_ps")], "265");
    r = run({"budget", "response-time", "--all", "--format", "json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json j = Json::parse(r.out);
    ASSERT_EQ(j.size(), 4u);
    EXPECT_EQ(j[3]["response_time_ps"].get<double>(), 2750.0);
}

TEST_F(CliTest, BudgetRateAndMap) {
    Result r = run({"budget", "rate", "--scheme", "ash"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto rows = parse_csv(r.out);
    EXPECT_NEAR(std::stod(rows[1][column(rows[0], "rate_hz")]), 38e6, 0.05 * 38e6);
    r = run({"budget", "map", "--steps", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(parse_csv(r.out).size(), 17u);
}

TEST_F(CliTest, SimulateIsByteReproducible) {
    const std::vector<std::string> args{"simulate", "--preset", "paper-nqd", "--pulses", "2e4", "--seed", "7"};
    auto a = args;
    a.insert(a.end(), {"-o", path("a.tts")});
    auto b = args;
    b.insert(b.end(), {"-o", path("b.tts")});
    ASSERT_EQ(run(a).code, 0);
    ASSERT_EQ(run(b).code, 0);
    EXPECT_EQ(slurp(path("a.tts")), slurp(path("b.tts")));
    EXPECT_EQ(slurp(path("a.tts.json")), slurp(path("b.tts.json")));
    const Json side = Json::parse(slurp(path("a.tts.json")));
    EXPECT_EQ(side["config"]["seed"], 7);
    EXPECT_EQ(side["config"]["n_pulses"], 20000);
    EXPECT_EQ(side["preset"], "paper-nqd");
}

TEST_F(CliTest, SimulatePresetExpansion) {
    const Result r = run({"simulate", "--preset", "model-system", "--pulses", "10", "-o", path("m.tts")});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json e = Json::parse(r.out)["config"]["emitter"];
    EXPECT_EQ(e["qy_x"], 0.61);
    EXPECT_EQ(e["qy_bx"], 0.7);
    EXPECT_EQ(e["tau_x_ns"], 1.6);
    EXPECT_NEAR(e["tau_bx_ns"].get<double>(), 0.5, 0.05);
    EXPECT_EQ(e["alpha"], 0.72);
}

TEST_F(CliTest, SimulateConfigErrors) {
    Result r = run({"simulate", "--pulses", "0", "-o", path("x.tts")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("n_pulses"), std::string::npos);
    EXPECT_EQ(run({"simulate", "--pulses", "2.5", "-o", path("x.tts")}).code, 2);
    EXPECT_EQ(run({"simulate", "--qyx", "1.5", "-o", path("x.tts")}).code, 2);
    EXPECT_EQ(run({"simulate", "--preset", "nope", "-o", path("x.tts")}).code, 2);
    EXPECT_EQ(run({"simulate", "-o", (dir_ / "missing" / "x.tts").string()}).code, 4);
}

TEST_F(CliTest, SimulateJsonConfig) {
    write("sim.json", R"({"n_pulses": 100, "seed": 3, "emitter": {"alpha": 0.5}})");
    Result r = run({"simulate", "--config", path("sim.json"), "--seed", "4", "-o", path("c.tts")});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json cfg = Json::parse(r.out)["config"];
    EXPECT_EQ(cfg["n_pulses"], 100);
    EXPECT_EQ(cfg["seed"], 4);
    EXPECT_EQ(cfg["emitter"]["alpha"], 0.5);
    write("bad.json", R"({"n_pulses": 100, "pulses": 3})");
    r = run({"simulate", "--config", path("bad.json"), "-o", path("c.tts")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("pulses"), std::string::npos);
}

TEST_F(CliTest, CommandConfigFile) {
    write("a.json", R"({"qyx": 0.61, "qybx": 0.7, "alpha": 1, "tr": 0})");
    Result r = run({"analytic", "eta-ash", "--config", path("a.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    auto rows = parse_csv(r.out);
    EXPECT_NEAR(std::stod(rows[1][column(rows[0], "efficiency")]), 0.427, 1e-12);
    // Explicit flags take precedence over the file.
    r = run({"analytic", "eta-ash", "--config", path("a.json"), "--alpha", "0.5"});
    rows = parse_csv(r.out);
    EXPECT_NEAR(std::stod(rows[1][column(rows[0], "efficiency")]), 0.427 / 4.0, 1e-12);
    write("b.json", R"({"qyx": 0.61, "colour": "red"})");
    r = run({"analytic", "eta-ash", "--config", path("b.json")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("colour"), std::string::npos);
}

TEST_F(CliTest, EmulateTimedSweepPeaksAtOptimum) {
    ASSERT_EQ(run({"simulate", "--preset", "ideal", "--pulses", "2e5", "-o", path("i.tts")}).code, 0);
    const Result r = run({"emulate", path("i.tts"), "--scheme", "timed", "--tf", "0", "--sweep", "tc", "--from",
                          "0.1", "--to", "1.5", "--step", "0.1", "--overlay-analytic"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = parse_csv(r.out);
    ASSERT_EQ(rows.size(), 16u);
    const std::size_t eff = column(rows[0], "efficiency");
    const std::size_t tc = column(rows[0], "t_c_ns");
    const std::size_t ana = column(rows[0], "analytic_efficiency");
    std::size_t best = 1;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (std::stod(rows[i][eff]) > std::stod(rows[best][eff])) best = i;
        EXPECT_NEAR(std::stod(rows[i][eff]), std::stod(rows[i][ana]), 0.01);
    }
    EXPECT_NEAR(std::stod(rows[best][tc]), hsps::tc_opt(1.0, 0.25), 0.1 + 1e-9);
}

TEST_F(CliTest, EmulateIsReproducible) {
    ASSERT_EQ(run({"simulate", "--preset", "model-system", "--pulses", "3e4", "-o", path("m.tts")}).code, 0);
    const std::vector<std::string> args{"emulate", path("m.tts"), "--scheme", "ash", "--tr", "0.265", "--sweep",
                                        "tf", "--from", "0", "--to", "2", "--step", "0.5", "--format", "json"};
    const Result a = run(args);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, run(args).out);
    EXPECT_EQ(Json::parse(a.out).size(), 5u);
}

TEST_F(CliTest, EmulateEmptyStream) {
    hsps::write_stream_file(hsps::EventStream{}, path("e.tts"));
    const Result r = run({"emulate", path("e.tts"), "--scheme", "ash", "--alpha", "0.5"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = parse_csv(r.out);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1][column(rows[0], "n_pulses")], "0");
    EXPECT_EQ(rows[1][column(rows[0], "efficiency")], "0");
    EXPECT_EQ(run({"emulate", path("e.tts"), "--scheme", "ash"}).code, 2);
}

TEST_F(CliTest, EmulateSchemeMismatch) {
    ASSERT_EQ(run({"simulate", "--preset", "ideal", "--pulses", "1000", "-o", path("i.tts")}).code, 0);
    const Result r = run({"emulate", path("i.tts"), "--scheme", "bs"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(run({"emulate", path("i.tts"), "--scheme", "herald"}).code, 2);
}

TEST_F(CliTest, IoErrors) {
    EXPECT_EQ(run({"emulate", path("none.tts"), "--scheme", "ash", "--alpha", "1"}).code, 4);
    write("junk.tts", "not a stream at all");
    const Result r = run({"emulate", path("junk.tts"), "--scheme", "ash", "--alpha", "1"});
    EXPECT_EQ(r.code, 4);
    EXPECT_EQ(Json::parse(r.err)["error"]["kind"], "parse");
}

TEST_F(CliTest, FitRecoversGeneratorLifetimes) {
    ASSERT_EQ(run({"simulate", "--qyx", "0.61", "--qybx", "0.7", "--tau-x", "1.6", "--tau-bx", "0.5", "--alpha",
                   "0.1", "--eta-cn", "0.3", "--tau-cn", "0.1", "--rep-ns", "50", "--dead-time", "0", "--r1", "1",
                   "--pulses", "3e6", "-o", path("f.tts")})
                  .code,
              0);
    const Result r = run({"fit", path("f.tts"), "--k", "3", "--range-ns", "20"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json j = Json::parse(r.out);
    const Json& c = j["fit"]["components"];
    ASSERT_EQ(c.size(), 3u);
    const double expected[] = {0.1, 0.5, 1.6};
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(c[i]["lifetime_ns"].get<double>(), expected[i], 0.1 * expected[i]) << "component " << i;
    }
    EXPECT_FALSE(j["derived"].is_null());
}

TEST_F(CliTest, HelpAndUsage) {
    EXPECT_EQ(run({"--help"}).code, 0);
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"budget"}).code, 2);
    EXPECT_EQ(run({"analytic", "eta-ash", "--bogus", "1"}).code, 2);
}

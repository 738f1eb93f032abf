#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dtss/cli.hpp"

namespace fs = std::filesystem;
using dtss::json;

namespace {

struct Outcome {
    int code = 0;
    std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "dtss");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Outcome o;
    o.code = dtss::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::size_t count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    return n;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = slurp(e.path());
    return files;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        root_ = fs::temp_directory_path() / ("dtss_cli_" + std::string(info->name()));
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }

    std::string write_config(const std::string& name, const json& j) {
        const auto p = root_ / name;
        std::ofstream(p) << j.dump(2);
        return p.string();
    }
    std::string dir(const std::string& name) const { return (root_ / name).string(); }

    fs::path root_;
};

json type1_config(std::size_t N, std::size_t M) {
    return json{{"master_seed", 42},
                {"generator", {{"type", "type1_iid"}, {"N", N}, {"M", M}}}};
}

json gaussian_config(std::size_t N, std::size_t M) {
    return json{{"master_seed", 7},
                {"generator", {{"type", "type2_gaussian"}, {"N", N}, {"M", M}, {"p", 2}, {"H", 0.5}}}};
}

}  // namespace

TEST_F(CliTest, GenerateTypeOneRowCount) {
    const auto cfg = write_config("c.json", type1_config(5, 7));
    const auto o = run_cli({"generate", "--config", cfg, "--out", dir("a")});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(count_lines(root_ / "a" / "ensemble.csv"), 1u + 7u * 6u);
    EXPECT_TRUE(fs::exists(root_ / "a" / "meta.json"));
    const auto manifest = read_json(root_ / "a" / "generate.manifest.json");
    EXPECT_EQ(manifest["command"], "generate");
    EXPECT_EQ(manifest["config"]["master_seed"], 42);
    EXPECT_EQ(read_json(root_ / "a" / "meta.json")["M"], 7);
}

TEST_F(CliTest, GenerateIsDeterministic) {
    const auto cfg = write_config("c.json", type1_config(10, 20));
    ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", dir("a")}).code, 0);
    ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", dir("b")}).code, 0);
    EXPECT_EQ(slurp(root_ / "a" / "ensemble.csv"), slurp(root_ / "b" / "ensemble.csv"));
    ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", dir("c"), "--seed", "43"}).code, 0);
    EXPECT_NE(slurp(root_ / "a" / "ensemble.csv"), slurp(root_ / "c" / "ensemble.csv"));
}

TEST_F(CliTest, UnknownFieldIsAConfigError) {
    json j = type1_config(5, 7);
    j["generator"]["lenght"] = 3;
    const auto o = run_cli({"generate", "--config", write_config("c.json", j), "--out", dir("a")});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("generator.lenght"), std::string::npos) << o.err;

    json top = type1_config(5, 7);
    top["extra"] = true;
    const auto o2 = run_cli({"generate", "--config", write_config("d.json", top), "--out", dir("a")});
    EXPECT_EQ(o2.code, 2);
    EXPECT_NE(o2.err.find("extra"), std::string::npos);
}

TEST_F(CliTest, OtherConfigErrors) {
    EXPECT_EQ(run_cli({"generate"}).code, 2);
    EXPECT_EQ(run_cli({"generate", "--config", dir("missing.json")}).code, 2);
    {
        std::ofstream(root_ / "bad.json") << "{ not json";
    }
    EXPECT_EQ(run_cli({"generate", "--config", dir("bad.json")}).code, 2);
    json no_seed = type1_config(5, 7);
    no_seed.erase("master_seed");
    EXPECT_EQ(run_cli({"generate", "--config", write_config("n.json", no_seed)}).code, 2);
    json bad_type = type1_config(5, 7);
    bad_type["generator"]["type"] = "type4";
    EXPECT_EQ(run_cli({"generate", "--config", write_config("t.json", bad_type)}).code, 2);
    json bad_u{{"master_seed", 1},
               {"generator", {{"type", "type2_shift"}, {"p", 2}, {"b", 0.5}, {"u", {{"values", {1.0, 1.0}}}}}}};
    EXPECT_EQ(run_cli({"generate", "--config", write_config("u.json", bad_u), "--out", dir("x")}).code, 2);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(run_cli({}).code, 2);
}

TEST_F(CliTest, OversizedEnsembleIsAResourceError) {
    const auto cfg = write_config("c.json", type1_config(1000000, 1000000));
    EXPECT_EQ(run_cli({"generate", "--config", cfg, "--out", dir("a")}).code, 3);
    const auto g = write_config("g.json", gaussian_config(50000, 10));
    EXPECT_EQ(run_cli({"generate", "--config", g, "--out", dir("a")}).code, 3);
}

TEST_F(CliTest, OverridesApply) {
    const auto cfg = write_config("c.json", type1_config(3, 10));
    const auto o = run_cli({"generate", "--config", cfg, "--out", dir("a"), "--set", "generator.M=4", "--set",
                            R"(generator.marginal={"family":"point","params":[2.5]})"});
    ASSERT_EQ(o.code, 0) << o.err;
    std::ifstream in(root_ / "a" / "ensemble.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "path,n,value");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(line.substr(line.rfind(',') + 1), "2.5");
    }
    EXPECT_EQ(rows, 4u * 4u);
    EXPECT_EQ(run_cli({"generate", "--config", cfg, "--set", "generator.M"}).code, 2);
}

TEST_F(CliTest, OverrideIntoArrayElement) {
    json root{{"verification", {{"checks", json::array({json{{"name", "marginal_scaling"}, {"n", 1}}})}}}};
    dtss::cli::apply_override(root, "verification.checks.0.n=3");
    EXPECT_EQ(root["verification"]["checks"][0]["n"], 3);
    dtss::cli::apply_override(root, "output.dir=somewhere");
    EXPECT_EQ(root["output"]["dir"], "somewhere");
    EXPECT_THROW(dtss::cli::apply_override(root, "verification.checks.5.n=3"), dtss::ConfigError);
}

TEST_F(CliTest, ResolvedConfigRoundTrips) {
    json j = gaussian_config(16, 100);
    j["verification"] = {{"suite", "type2"},
                         {"checks", json::array({json{{"name", "covariance"}, {"n", 2}, {"m", 4}}})}};
    j["spectral"] = {{"M_max", 2}, {"checks", {"rotation", "tail"}}, {"offgrid", {{"lambda", "2/5"}}}};
    const auto c = dtss::cli::parse_config(j);
    const json resolved = dtss::cli::to_json(c);
    EXPECT_EQ(dtss::cli::to_json(dtss::cli::parse_config(resolved)).dump(), resolved.dump());
    EXPECT_EQ(resolved["spectral"]["offgrid"]["lambda"], "2/5");
}

TEST_F(CliTest, VerifyGaussianSuitePasses) {
    json j = gaussian_config(9, 6000);
    j["verification"] = {{"suite", "type2"},
                         {"checks", json::array({json{{"name", "covariance"}, {"n", 2}, {"m", 4}},
                                                 json{{"name", "symmetry"}}})}};
    const auto o = run_cli({"verify", "--config", write_config("c.json", j), "--out", dir("a"), "--strict"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rep = read_json(root_ / "a" / "verify_report.json");
    EXPECT_TRUE(rep["pass"].get<bool>());
    EXPECT_EQ(rep["correction"], "holm");
    EXPECT_EQ(rep["checks"].size(), 6u + 9u + 2u);
    const auto& cov = rep["checks"][15];
    EXPECT_EQ(cov["name"], "covariance");
    EXPECT_DOUBLE_EQ(cov["expected"].get<double>(), 0.125);
    for (const char* field : {"statistic", "p_value", "alpha", "decision", "n", "m", "holm_reject", "params"})
        EXPECT_TRUE(rep["checks"][0].contains(field)) << field;
}

TEST_F(CliTest, VerifyTypeOneAgainstTypeTwoFails) {
    json j = type1_config(9, 6000);
    j["verification"] = {{"suite", "type2"}, {"scaling", {{"kind", "type2"}, {"p", 2}, {"H", 0.5}}}};
    const auto cfg = write_config("c.json", j);
    const auto lax = run_cli({"verify", "--config", cfg, "--out", dir("a")});
    EXPECT_EQ(lax.code, 0);
    EXPECT_FALSE(read_json(root_ / "a" / "verify_report.json")["pass"].get<bool>());
    EXPECT_EQ(run_cli({"verify", "--config", cfg, "--out", dir("b"), "--strict"}).code, 4);
}

TEST_F(CliTest, VerifyEmptyCheckListPasses) {
    const auto o = run_cli({"verify", "--config", write_config("c.json", type1_config(3, 10)), "--out", dir("a"),
                            "--strict"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rep = read_json(root_ / "a" / "verify_report.json");
    EXPECT_TRUE(rep["pass"].get<bool>());
    EXPECT_TRUE(rep["checks"].empty());
}

TEST_F(CliTest, VerifyFromGeneratedCsv) {
    const auto gen = write_config("g.json", gaussian_config(6, 3000));
    ASSERT_EQ(run_cli({"generate", "--config", gen, "--out", dir("a")}).code, 0);
    json v{{"input", {{"ensemble_csv", (root_ / "a" / "ensemble.csv").string()}}},
           {"verification",
            {{"checks", json::array({json{{"name", "stationary_increments"}, {"m", 1}, {"k", 2}}})}}}};
    const auto o = run_cli({"verify", "--config", write_config("v.json", v), "--out", dir("b"), "--strict"});
    EXPECT_EQ(o.code, 0) << o.err;
    // marginal scaling on CSV input needs an explicit scaling function
    v["verification"]["checks"] = json::array({json{{"name", "marginal_scaling"}}});
    EXPECT_EQ(run_cli({"verify", "--config", write_config("w.json", v), "--out", dir("c")}).code, 2);
    json missing{{"input", {{"ensemble_csv", (root_ / "nope.csv").string()}}}};
    EXPECT_EQ(run_cli({"verify", "--config", write_config("m.json", missing), "--out", dir("d")}).code, 3);
}

TEST_F(CliTest, SpectralPureWaveInput) {
    {
        std::ofstream csv(root_ / "wave.csv");
        csv << "path,n,value\n";
        for (int path = 0; path < 3; ++path)
            for (int n = 0; n <= 16; ++n) csv << path << ',' << n << ',' << ((n % 2) ? -2 : 0) << '\n';
    }
    json j{{"input", {{"ensemble_csv", (root_ / "wave.csv").string()}}},
           {"spectral", {{"p", 2}, {"H", 0.5}, {"M_max", 2}, {"R", 4}}}};
    const auto o = run_cli({"spectral", "--config", write_config("c.json", j), "--out", dir("a")});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto tables = read_json(root_ / "a" / "tables.json");
    ASSERT_EQ(tables.size(), 3u);
    for (const auto& t : tables) {
        EXPECT_EQ(t["N_used"], 16);
        EXPECT_NEAR(t["constant"]["re"].get<double>(), -1.0, 1e-15);
        std::size_t nonzero = 0;
        for (const auto& e : t["entries"]) {
            const double mag = std::hypot(e["re"].get<double>(), e["im"].get<double>());
            if (mag > 1e-12) {
                ++nonzero;
                EXPECT_EQ(e["m"], 1);
                EXPECT_EQ(e["l"], 1);
                EXPECT_NEAR(e["re"].get<double>(), 1.0, 1e-14);
            }
        }
        EXPECT_EQ(nonzero, 1u);
        EXPECT_EQ(dtss::table_from_json(t).at(1, 1), dtss::cplx(1.0, 0.0));
    }
    std::ifstream energy(root_ / "a" / "energy.csv");
    std::string header;
    std::getline(energy, header);
    EXPECT_EQ(header, "layer,m,energy,stderr");
}

TEST_F(CliTest, SpectralGaussianEnergyAndConditions) {
    json j = gaussian_config(64, 1500);
    j["spectral"] = {{"M_max", 3}, {"checks", {"rotation", "scaling_relation", "q_permutation", "offgrid", "tail"}},
                     {"offgrid", {{"lambda", "1/3"}, {"m", 3}}}, {"write_tables", false}};
    const auto o = run_cli({"spectral", "--config", write_config("c.json", j), "--out", dir("a"), "--strict"});
    ASSERT_EQ(o.code, 0) << o.err << o.out;
    const auto rep = read_json(root_ / "a" / "spectral_report.json");
    EXPECT_EQ(rep["R"], 8);
    EXPECT_EQ(rep["conditions"].size(), 5u);
    EXPECT_FALSE(fs::exists(root_ / "a" / "tables.json"));
    std::ifstream ratio(root_ / "a" / "energy_ratio.csv");
    std::string line;
    std::getline(ratio, line);
    EXPECT_EQ(line, "m,ratio,expected");
    while (std::getline(ratio, line)) {
        std::stringstream ss(line);
        std::string m, r, e;
        std::getline(ss, m, ',');
        std::getline(ss, r, ',');
        std::getline(ss, e, ',');
        EXPECT_NEAR(std::stod(r), 0.5, 0.1) << line;
        EXPECT_EQ(std::stod(e), 0.5);
    }
}

TEST_F(CliTest, SpectralTooShortIsASizeError) {
    json j = gaussian_config(16, 10);
    j["spectral"] = {{"M_max", 5}};
    const auto o = run_cli({"spectral", "--config", write_config("c.json", j), "--out", dir("a")});
    EXPECT_EQ(o.code, 3);
    EXPECT_NE(o.err.find("need X_0..X_256"), std::string::npos) << o.err;
}

TEST_F(CliTest, SpectralUnderpoweredChecksRefused) {
    json j = gaussian_config(32, 50);
    j["spectral"] = {{"M_max", 2}, {"checks", {"rotation"}}};
    EXPECT_EQ(run_cli({"spectral", "--config", write_config("c.json", j), "--out", dir("a")}).code, 3);
    j["spectral"] = {{"M_max", 2}, {"checks", {"q_permutation"}}, {"q", 2}};
    j["generator"]["M"] = 200;
    EXPECT_EQ(run_cli({"spectral", "--config", write_config("d.json", j), "--out", dir("b")}).code, 2);
}

TEST_F(CliTest, SpectralDefaultsToOnePeriodForTruncatedGenerators) {
    json j{{"master_seed", 5},
           {"generator", {{"type", "type2_iid"}, {"p", 2}, {"H", 0.5}, {"K", 2}, {"N", 8}, {"M", 5}}},
           {"spectral", {{"M_max", 3}}}};
    const auto o = run_cli({"spectral", "--config", write_config("c.json", j), "--out", dir("a")});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(read_json(root_ / "a" / "spectral_report.json")["R"], 1);
}

TEST_F(CliTest, ManifestRerunIsByteIdentical) {
    json j = gaussian_config(32, 120);
    j["verification"] = {{"suite", "type2"}};
    j["spectral"] = {{"M_max", 2}, {"checks", {"rotation", "tail"}}};
    const auto cfg = write_config("c.json", j);
    ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", dir("a")}).code, 0);
    ASSERT_EQ(run_cli({"verify", "--config", cfg, "--out", dir("a")}).code, 0);
    ASSERT_EQ(run_cli({"spectral", "--config", cfg, "--out", dir("a")}).code, 0);
    const auto before = snapshot(root_ / "a");
    const auto manifests = std::vector<std::string>{"generate", "verify", "spectral"};
    fs::create_directories(root_ / "m");
    for (const auto& m : manifests) fs::copy_file(root_ / "a" / (m + ".manifest.json"), root_ / "m" / (m + ".json"));
    for (const auto& m : manifests) ASSERT_EQ(run_cli({m, "--config", (root_ / "m" / (m + ".json")).string()}).code, 0);
    EXPECT_EQ(snapshot(root_ / "a"), before);
    for (const auto& m : manifests) EXPECT_EQ(read_json(root_ / "a" / (m + ".manifest.json"))["config"]["output"]["dir"], dir("a"));
}

TEST_F(CliTest, ReportCollatesResults) {
    json j = gaussian_config(32, 300);
    j["verification"] = {{"suite", "type2"}};
    j["spectral"] = {{"M_max", 2}, {"checks", {"rotation"}}};
    const auto cfg = write_config("c.json", j);
    ASSERT_EQ(run_cli({"verify", "--config", cfg, "--out", dir("a")}).code, 0);
    ASSERT_EQ(run_cli({"spectral", "--config", cfg, "--out", dir("a")}).code, 0);
    const auto o = run_cli({"report", "--out", dir("a"), "--strict"});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NE(o.out.find("verify: pass"), std::string::npos);
    const auto summary = read_json(root_ / "a" / "summary.json");
    EXPECT_TRUE(summary["pass"].get<bool>());
    EXPECT_EQ(summary["verify"]["checks"], 15);
    EXPECT_TRUE(summary["spectral"]["conditions"]["rotation"].get<bool>());

    fs::create_directories(root_ / "empty");
    EXPECT_EQ(run_cli({"report", "--out", dir("empty")}).code, 3);
}

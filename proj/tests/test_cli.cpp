#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fairrep_cli.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace fairrep;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "fairrep");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("fairrep_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        const auto ds = fairrep::testing::synthetic_dataset(150, 4, 0.3, 3);
        std::ofstream csv(dir_ / "toy.csv");
        csv << "x1,x2,noise,proxy,label,grp\n";
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            csv << ds.features(r, 0) << "," << ds.features(r, 1) << "," << ds.features(r, 2) << ","
                << ds.features(r, 3) << "," << ds.relevance[i] << "," << (ds.group[i] ? "b" : "a")
                << "\n";
        }
        std::ofstream(dir_ / "toy.schema") << "x1: numeric\nx2: numeric\nnoise: numeric\n"
                                              "proxy: numeric\nlabel: relevance\n"
                                              "grp: sensitive protected=b groups=A|B\n";
        std::ofstream(dir_ / "toy.conf") << "dataset = csv\n"
                                            "data_path = " << (dir_ / "toy.csv").string() << "\n"
                                            "schema = " << (dir_ / "toy.schema").string() << "\n"
                                            "budget = 2\nepochs = 2\nmax_pairs = 300\nndcg_k = 20\n"
                                            "lr_min = 0.01\n";
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string conf() const { return (dir_ / "toy.conf").string(); }
    fs::path dir_;
};

}  // namespace

TEST_F(Cli, DataStatsPrintsGroupMeans) {
    const auto r = run_cli({"data-stats", "--config", conf(), "--feature", "proxy",
                            "--out-dir", (dir_ / "stats").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("feature,mean_A,mean_B,difference\nproxy,", 0), 0u) << r.out;
    EXPECT_EQ(slurp(dir_ / "stats" / "data_stats.csv"), r.out);
}

TEST_F(Cli, CompasDataStatsWhenPresent) {
    const std::string path = std::string(FAIRREP_SOURCE_DIR) + "/data/compas-scores-two-years.csv";
    if (!fs::exists(path)) GTEST_SKIP() << "COMPAS csv not present";
    const auto r = run_cli({"data-stats", "--dataset", "compas=" + path, "--feature", "priors_count"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "feature,mean_White,mean_Black,difference\npriors_count,2.289111,4.238110,1.948999\n");
}

TEST_F(Cli, ExplainOnUntrainedModelGivesZeroCorrections) {
    std::ofstream(dir_ / "toy.conf", std::ios::app) << "epochs = 0\n";
    const auto train = run_cli({"train", "--config", conf(), "--out-dir", (dir_ / "m").string()});
    ASSERT_EQ(train.code, 0) << train.err;
    ASSERT_TRUE(fs::exists(dir_ / "m" / "model.json"));
    ASSERT_TRUE(fs::exists(dir_ / "m" / "metrics.csv"));
    const auto ex = run_cli({"explain", "--model", (dir_ / "m" / "model.json").string(),
                             "--out-dir", (dir_ / "m").string()});
    ASSERT_EQ(ex.code, 0) << ex.err;
    std::istringstream csv(slurp(dir_ / "m" / "correction_report.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "feature,group,mean_original,mean_corrected,mean_correction,percent_change");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        // mean_correction column
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        ASSERT_EQ(cells.size(), 6u);
        EXPECT_TRUE(cells[4] == "0.000000" || cells[4] == "-0.000000") << line;
    }
    EXPECT_EQ(rows, 12u);
}

TEST_F(Cli, TrainThenEvaluate) {
    const auto train = run_cli({"train", "--config", conf(), "--seed", "3", "--out-dir", dir_.string()});
    ASSERT_EQ(train.code, 0) << train.err;
    const auto metrics = nlohmann::json::parse(slurp(dir_ / "metrics.json"));
    EXPECT_TRUE(metrics.contains("ndcg_at_k"));
    const auto ev = run_cli({"evaluate", "--model", (dir_ / "model.json").string()});
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_TRUE(nlohmann::json::parse(ev.out).contains("one_minus_gpa"));
}

TEST_F(Cli, CvIsByteIdenticalAcrossRuns) {
    const auto a = run_cli({"cv", "--config", conf(), "--seed", "7", "--out-dir", (dir_ / "a").string()});
    const auto b = run_cli({"cv", "--config", conf(), "--seed", "7", "--out-dir", (dir_ / "b").string()});
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0) << b.err;
    for (const char* f : {"results.csv", "results.json"}) {
        const auto x = slurp(dir_ / "a" / f);
        EXPECT_FALSE(x.empty());
        EXPECT_EQ(x, slurp(dir_ / "b" / f)) << f;
    }
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({}).code, 1);
    const auto bad_flag = run_cli({"data-stats", "--colour", "red"});
    EXPECT_EQ(bad_flag.code, 1);
    EXPECT_FALSE(bad_flag.err.empty());
    EXPECT_EQ(run_cli({"cv"}).code, 1);  // --config is required
    std::ofstream(dir_ / "bad.conf") << "colour = red\n";
    EXPECT_EQ(run_cli({"cv", "--config", (dir_ / "bad.conf").string()}).code, 1);
    EXPECT_EQ(run_cli({"data-stats", "--dataset", "compas=/nonexistent.csv"}).code, 2);
    EXPECT_EQ(run_cli({"evaluate", "--model", (dir_ / "missing.json").string()}).code, 2);
    EXPECT_EQ(run_cli({"data-stats", "--config", conf(), "--feature", "nope"}).code, 2);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
}

#include <cstdlib>
#include <filesystem>
#include <vector>
#include <sys/wait.h>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "reprint/embedding_store.hpp"
#include "temp_dir.hpp"

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    Outcome run(const std::string& args) {
        const auto out = dir / "stdout.txt";
        const auto err = dir / "stderr.txt";
        const std::string cmd = std::string(REPRINT_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
        const int status = std::system(cmd.c_str());
        return Outcome{WEXITSTATUS(status), slurp(out), slurp(err)};
    }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    void make_data(int train_per_class = 80) {
        auto r = run("synth --classes 3 --dim 6 --mean-scale 2 --spectrum 4,2,1,0.5 --train-per-class " +
                     std::to_string(train_per_class) + " --test-per-class 30 --seed 1 --out " + path("pool.emb") +
                     " --out-test " + path("test.emb"));
        ASSERT_EQ(r.code, 0) << r.err;
    }

    TempDir dir;
};

} // namespace

TEST_F(Cli, SynthAugmentTrainEval) {
    make_data();
    auto r = run("augment --method reprint --pcs 2 --in " + path("pool.emb") + " --out " + path("aug.embs") + " --seed 3");
    ASSERT_EQ(r.code, 0) << r.err;
    auto aug = reprint::read_soft(path("aug.embs"));
    EXPECT_EQ(aug.size(), 3u * 80 * 2);

    r = run("train-eval --train " + path("pool.emb") + " " + path("aug.embs") + " --test " + path("test.emb") +
            " --epochs 3 --hidden 8 --model-out " + path("m.bin"));
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j.at("train_size").get<int>(), 3 * 80 * 3);
    EXPECT_EQ(j.at("test_size").get<int>(), 90);
    EXPECT_GE(j.at("accuracy").get<double>(), 0.0);
    EXPECT_TRUE(std::filesystem::exists(path("m.bin")));
}

TEST_F(Cli, BaselineAugmentWithOriginal) {
    make_data();
    auto r = run("augment --method smote --smote-k 3 --with-original --in " + path("pool.emb") + " --out " +
                 path("s.embs"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(reprint::read_soft(path("s.embs")).size(), 240u);  // already balanced
}

TEST_F(Cli, PcaInfoCsv) {
    make_data();
    auto r = run("pca-info --in " + path("pool.emb") + " --evr 0.9");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("class,name,n,rank,total_variance,component,singular_value,ratio,cumulative\n", 0), 0u);
}

TEST_F(Cli, ErrorsAreJsonLines) {
    std::ofstream(path("bad.emb")) << "NOPE0000000000000000";
    auto r = run("augment --method upsample --in " + path("bad.emb") + " --out " + path("x.embs"));
    EXPECT_EQ(r.code, 1);
    auto j = nlohmann::json::parse(r.err.substr(r.err.find('{')));
    EXPECT_EQ(j.at("error"), "FormatError");

    make_data();
    r = run("augment --method eda --in " + path("pool.emb") + " --out " + path("x.embs"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("ConfigError"), std::string::npos);
}

TEST_F(Cli, BenchDeterministicAcrossWorkers) {
    make_data();
    const std::string base = "bench --in " + path("pool.emb") + " --test " + path("test.emb") +
                             " --methods none,reprint,ge3 --n-small 4,8 --n-large 40 --num-seeds 2 --epochs 2 --hidden 8";
    auto a = run(base + " --workers 1 --out " + path("a.csv") + " --summary " + path("as.csv"));
    auto b = run(base + " --workers 3 --out " + path("b.csv") + " --summary " + path("bs.csv"));
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
    EXPECT_EQ(slurp(path("as.csv")), slurp(path("bs.csv")));
    std::istringstream rows(slurp(path("a.csv")));
    int lines = 0;
    for (std::string l; std::getline(rows, l);) ++lines;
    EXPECT_EQ(lines, 1 + 3 * 2 * 2);
}

TEST_F(Cli, BenchFailedCellsExitThree) {
    make_data(20);
    auto r = run("bench --in " + path("pool.emb") + " --test " + path("test.emb") +
                 " --methods none --n-small 4 --n-large 50 --num-seeds 1 --epochs 1 --errors " + path("e.csv"));
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.out.find(",NA"), std::string::npos);
    EXPECT_NE(slurp(path("e.csv")).find("PoolError"), std::string::npos);
}

TEST_F(Cli, BenchConfigFileWithOverrides) {
    make_data();
    std::ofstream(path("cfg.toml")) << "methods = [\"upsample\", \"ge3\"]\nn_small = [4]\nn_large = 40\nnum_seeds = 2\n"
                                       "epochs = 1\nhidden = [4]\n";
    auto r = run("bench --config " + path("cfg.toml") + " --in " + path("pool.emb") + " --test " + path("test.emb") +
                 " --num-seeds 1");
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream rows(r.out);
    std::vector<std::string> lines;
    for (std::string l; std::getline(rows, l);) lines.push_back(l);
    ASSERT_EQ(lines.size(), 3u) << r.out;
    EXPECT_EQ(lines[1].rfind("synthetic,upsample,4,0,", 0), 0u) << lines[1];
    EXPECT_EQ(lines[2].rfind("synthetic,ge3,4,0,", 0), 0u) << lines[2];
}

TEST_F(Cli, Export2d) {
    make_data();
    auto r = run("export-2d --in " + path("pool.emb") + " --out " + path("pts.csv"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = slurp(path("pts.csv"));
    EXPECT_EQ(csv.rfind("name,x,y\n", 0), 0u);
    EXPECT_NE(csv.find("pool:class2,"), std::string::npos);
}

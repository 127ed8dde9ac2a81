#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace ebmlab;

namespace {

int cli(const std::string& args, const std::string& log = "/dev/null") {
    const std::string cmd = std::string(EBMLAB_CLI_PATH) + " " + args + " >" + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<std::string> fields(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string f; std::getline(in, f, ',');) out.push_back(f);
    return out;
}

void write(const std::string& path, const std::string& text) {
    std::ofstream(path) << text;
}

const std::string kQuick = std::string(EBMLAB_CONFIG_DIR) + "/quick_ibc.cfg";

} // namespace

TEST(Cli, TrainWritesOneMetricsRowPerEpoch) {
    test::TempDir dir("cli_train");
    ASSERT_EQ(cli("train --quiet --config " + kQuick + " --out " + dir.path().string()), 0);
    const auto m = lines(slurp(dir.file("metrics.csv")));
    ASSERT_EQ(m.size(), 4u);
    EXPECT_EQ(m[0] + "\n", metrics_csv_header());
    for (const char* f : {"timing.csv", "checkpoint.txt", "summary.csv", "config.txt"})
        EXPECT_TRUE(std::filesystem::exists(dir.file(f))) << f;
    const Checkpoint ck = load_checkpoint(dir.file("checkpoint.txt"));
    EXPECT_EQ(ck.state.epoch, 3u);
}

TEST(Cli, RerunIsByteIdentical) {
    test::TempDir a("cli_rep_a"), b("cli_rep_b");
    ASSERT_EQ(cli("train --quiet --config " + kQuick + " --out " + a.path().string()), 0);
    ASSERT_EQ(cli("train --quiet --config " + kQuick + " --out " + b.path().string()), 0);
    EXPECT_EQ(slurp(a.file("metrics.csv")), slurp(b.file("metrics.csv")));
    EXPECT_EQ(slurp(a.file("checkpoint.txt")), slurp(b.file("checkpoint.txt")));
}

TEST(Cli, ResumeMatchesUninterruptedTraining) {
    test::TempDir full("cli_full"), first("cli_first"), second("cli_second");
    ASSERT_EQ(cli("train --quiet --config " + kQuick + " --out " + full.path().string()), 0);
    ASSERT_EQ(cli("train --quiet --epochs 2 --config " + kQuick + " --out " + first.path().string()), 0);
    ASSERT_EQ(cli("train --quiet --epochs 3 --resume " + first.file("checkpoint.txt") + " --out " +
                  second.path().string()),
              0);
    const auto all = lines(slurp(full.file("metrics.csv")));
    const auto tail = lines(slurp(second.file("metrics.csv")));
    ASSERT_EQ(tail.size(), 2u);
    // The 2-epoch run validates at its own last epoch, which changes the
    // carried validation value but not the weights.
    EXPECT_EQ(fields(tail[1])[1], fields(all[3])[1]);
    const Checkpoint x = load_checkpoint(full.file("checkpoint.txt"));
    const Checkpoint y = load_checkpoint(second.file("checkpoint.txt"));
    EXPECT_TRUE(x.state.model == y.state.model);
    EXPECT_TRUE(x.state.model_opt == y.state.model_opt);
}

TEST(Cli, InvalidTrialExitsTwoAndListsNames) {
    test::TempDir dir("cli_bad");
    write(dir.file("bad.cfg"), "trial = Fancy\n");
    const std::string log = dir.file("log.txt");
    EXPECT_EQ(cli("train --config " + dir.file("bad.cfg") + " --out " + dir.file("o"), log), 2);
    const std::string msg = slurp(log);
    for (auto n : kTrialNames) EXPECT_NE(msg.find(std::string(n)), std::string::npos);
}

TEST(Cli, ConfigErrorsExitTwo) {
    test::TempDir dir("cli_cfg");
    write(dir.file("typo.cfg"), "trial = Ibc\nepohcs = 3\n");
    EXPECT_EQ(cli("train --config " + dir.file("typo.cfg") + " --out " + dir.file("o")), 2);
    write(dir.file("fixed.cfg"), "trial = Ibc\nloss = mcmc\n");
    EXPECT_EQ(cli("train --config " + dir.file("fixed.cfg") + " --out " + dir.file("o")), 2);
    EXPECT_EQ(cli("train --out " + dir.file("o")), 2);
    EXPECT_EQ(cli("frobnicate"), 2);
}

TEST(Cli, DiagnoseWritesSamplesAndSeparatesFormulations) {
    test::TempDir dir("cli_diag");
    write(dir.file("d.cfg"), "seed = 2\ndiagnose.iterations = 3000\ndiagnose.discard = 1000\n");
    ASSERT_EQ(cli("diagnose --config " + dir.file("d.cfg") + " --out " + dir.path().string()), 0);
    const auto samples = lines(slurp(dir.file("samples.csv")));
    EXPECT_EQ(samples.size(), 1u + 2u * 2000u);
    EXPECT_EQ(samples[0], "formulation,step,y_1,y_2");
    const auto summary = lines(slurp(dir.file("summary.csv")));
    ASSERT_EQ(summary.size(), 3u);
    const auto correct = fields(summary[1]);
    const auto ibc = fields(summary[2]);
    ASSERT_EQ(correct[0], "correct");
    ASSERT_EQ(ibc[0], "ibc");
    const double vc = std::stod(correct[6]), vi = std::stod(ibc[6]);
    EXPECT_GE(vc, 0.7);
    EXPECT_LE(vc, 1.3);
    EXPECT_GT(std::abs(vc - vi) / vc, 0.3);
}

TEST(Cli, EvalRateIsMeanOfRowColumn) {
    test::TempDir dir("cli_eval");
    ASSERT_EQ(cli("train --quiet --config " + kQuick + " --out " + dir.file("run")), 0);
    write(dir.file("g.cfg"), "task.noise = 0.02\ntask.train_rows = 40\ntask.val_rows = 20\ntask.seed = 9\n");
    ASSERT_EQ(cli("gen --config " + dir.file("g.cfg") + " --out " + dir.file("data")), 0);
    ASSERT_EQ(cli("eval --checkpoint " + dir.file("run/checkpoint.txt") + " --dataset " + dir.file("data/validation.csv") +
                  " --out " + dir.file("ev")),
              0);
    const auto rows = lines(slurp(dir.file("ev/eval.csv")));
    ASSERT_EQ(rows.size(), 21u);
    double hits = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) hits += std::stod(fields(rows[i]).back());
    const auto summary = lines(slurp(dir.file("ev/summary.csv")));
    const double rate = std::stod(fields(summary[1])[1]);
    EXPECT_GE(rate, 0.0);
    EXPECT_LE(rate, 1.0);
    EXPECT_DOUBLE_EQ(rate, hits / 20.0);
}

TEST(Cli, EvalRejectsEmptyAndMismatchedData) {
    test::TempDir dir("cli_eval_bad");
    ASSERT_EQ(cli("train --quiet --config " + kQuick + " --out " + dir.file("run")), 0);
    write(dir.file("empty.csv"), "obs_dim,act_dim,split\n2,1,validation\nx_1,x_2,y_1\n");
    EXPECT_EQ(cli("eval --checkpoint " + dir.file("run/checkpoint.txt") + " --dataset " + dir.file("empty.csv") +
                  " --out " + dir.file("ev")),
              1);
    ASSERT_EQ(cli("gen --config " + std::string(EBMLAB_CONFIG_DIR) + "/gen_ring.cfg --out " + dir.file("ring")), 0);
    EXPECT_EQ(cli("eval --checkpoint " + dir.file("run/checkpoint.txt") + " --dataset " + dir.file("ring/train.csv") +
                  " --out " + dir.file("ev2")),
              1);
}

TEST(Cli, GenIsSeedDeterministic) {
    test::TempDir a("cli_gen_a"), b("cli_gen_b");
    const std::string cfg = std::string(EBMLAB_CONFIG_DIR) + "/gen_ring.cfg";
    ASSERT_EQ(cli("gen --config " + cfg + " --out " + a.path().string()), 0);
    ASSERT_EQ(cli("gen --config " + cfg + " --out " + b.path().string()), 0);
    EXPECT_EQ(slurp(a.file("train.csv")), slurp(b.file("train.csv")));
    const Dataset d = load_dataset(a.file("validation.csv"));
    EXPECT_EQ(d.rows(), 256u);
    EXPECT_EQ(d.act_dim(), 2u);
}

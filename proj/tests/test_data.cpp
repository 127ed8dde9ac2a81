#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include "support.hpp"

using namespace ebmlab;

TEST(TwoMode, ZeroNoiseActionsAreModes) {
    TaskSpec spec;
    spec.act_dim = 3;
    const auto d = generate(spec);
    for (std::size_t r = 0; r < d.train.rows(); ++r) {
        const double v = d.train.act(0, static_cast<Eigen::Index>(r));
        EXPECT_TRUE(v == 0.5 || v == -0.5);
        for (std::size_t k = 1; k < 3; ++k) EXPECT_EQ(d.train.act(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r)), v);
    }
    EXPECT_LE(d.train.obs.cwiseAbs().maxCoeff(), 1.0);
}

TEST(TwoMode, SameSeedSameData) {
    TaskSpec spec;
    spec.noise = 0.05;
    spec.seed = 9;
    const auto a = generate(spec), b = generate(spec);
    EXPECT_TRUE(a.train == b.train);
    EXPECT_TRUE(a.validation == b.validation);
    spec.seed = 10;
    EXPECT_FALSE(a.train == generate(spec).train);
    EXPECT_FALSE(a.train.obs.leftCols(5) == a.validation.obs.leftCols(5));
}

TEST(TwoMode, ModeBalance) {
    TaskSpec spec;
    spec.train_rows = 10000;
    const auto d = generate(spec);
    const double pos = static_cast<double>((d.train.act.row(0).array() > 0.0).count()) / 10000.0;
    EXPECT_NEAR(pos, 0.5, 0.05);
}

TEST(Tasks, GeneratedActionsPassSuccessWithinNoiseBound) {
    for (TaskKind kind : {TaskKind::two_mode, TaskKind::ring, TaskKind::particle_analog}) {
        for (double noise : {0.0, 0.02}) {
            TaskSpec spec;
            spec.kind = kind;
            spec.noise = noise;
            if (kind != TaskKind::two_mode) spec.act_dim = 2;
            if (kind == TaskKind::particle_analog) spec.obs_dim = 4;
            const auto d = generate(spec);
            for (std::size_t r = 0; r < d.train.rows(); ++r)
                EXPECT_TRUE(success(spec, d.train.x(r), d.train.y(r), 1e-9 + spec.noise_bound()))
                    << to_string(kind) << " row " << r;
        }
    }
}

TEST(Success, HandExamples) {
    TaskSpec spec;
    const std::vector<double> x{0.0, 0.0};
    EXPECT_TRUE(success(spec, x, std::vector<double>{0.5}, 1e-12));
    EXPECT_TRUE(success(spec, x, std::vector<double>{-0.5}, 1e-12));
    EXPECT_FALSE(success(spec, x, std::vector<double>{0.0}, 0.05));
    EXPECT_NEAR(nearest_mode_distance(spec, x, std::vector<double>{0.0}), 0.5, 1e-15);
    EXPECT_THROW(success(spec, x, std::vector<double>{0.0, 1.0}, 0.05), ShapeError);
}

TEST(Tasks, InvalidSpecs) {
    TaskSpec spec;
    spec.kind = TaskKind::ring;
    EXPECT_THROW(generate(spec), ConfigError);
    spec = {};
    spec.noise = -1.0;
    EXPECT_THROW(generate(spec), ConfigError);
    EXPECT_THROW(parse_task_kind("spiral"), ConfigError);
}

TEST(DatasetCsv, RoundTripIsExact) {
    TaskSpec spec;
    spec.noise = 0.1;
    spec.obs_dim = 3;
    spec.act_dim = 2;
    const auto d = generate(spec);
    std::stringstream ss;
    write_dataset(ss, d.validation);
    const Dataset back = read_dataset(ss);
    EXPECT_TRUE(back == d.validation);
    EXPECT_EQ(back.split, Split::validation);
}

TEST(DatasetCsv, MissingColumnNamesTheColumn) {
    const std::string text = "obs_dim,act_dim,split\n2,1,train\nx_1,x_2,y_1\n0.1,0.2,0.5\n0.3,0.4\n";
    std::stringstream ss(text);
    try {
        read_dataset(ss);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("y_1"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos) << e.what();
    }
    std::stringstream header("obs_dim,act_dim,split\n2,1,train\nx_1,y_1\n");
    try {
        read_dataset(header);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("x_2"), std::string::npos) << e.what();
    }
}

TEST(DatasetCsv, MalformedValues) {
    std::stringstream bad("obs_dim,act_dim,split\n1,1,train\nx_1,y_1\n0.1,abc\n");
    EXPECT_THROW(read_dataset(bad), ParseError);
    std::stringstream empty("");
    EXPECT_THROW(read_dataset(empty), ParseError);
    std::stringstream split("obs_dim,act_dim,split\n1,1,test\nx_1,y_1\n");
    EXPECT_THROW(read_dataset(split), ParseError);
}

TEST(DatasetCsv, TenThousandRowsLoadQuickly) {
    TaskSpec spec;
    spec.train_rows = 10000;
    spec.noise = 0.01;
    test::TempDir dir("data");
    save_dataset(dir.file("train.csv"), generate(spec).train);
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset d = load_dataset(dir.file("train.csv"));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_EQ(d.rows(), 10000u);
    EXPECT_LT(secs, 1.0);
}

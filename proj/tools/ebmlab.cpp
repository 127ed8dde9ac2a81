// ebmlab command line: train, diagnose, eval, gen.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ebmlab/ebmlab.hpp"

namespace fs = std::filesystem;
using namespace ebmlab;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw Error("cannot open " + p.string() + " for writing");
    return out;
}

void make_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw Error("cannot create directory " + p.string() + ": " + ec.message());
}

struct TrainArgs {
    std::string config;
    std::string resume;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    bool quiet = false;
};

DatasetPair training_data(const TrainConfig& cfg, const std::string& train_path, const std::string& val_path) {
    if (train_path.empty()) return generate(cfg.task);
    DatasetPair d;
    d.train = load_dataset(train_path);
    if (!val_path.empty()) d.validation = load_dataset(val_path);
    return d;
}

int run_train(const TrainArgs& a) {
    TrainConfig cfg;
    std::string train_path, val_path;
    std::optional<TrainingState> resumed;
    if (!a.resume.empty()) {
        Checkpoint ck = load_checkpoint(a.resume);
        cfg = ck.config;
        resumed = std::move(ck.state);
        if (a.seed) throw ConfigError("--seed cannot be combined with --resume");
    } else {
        KeyValues kv = KeyValues::load(a.config);
        if (a.seed) kv.set("seed", std::to_string(*a.seed));
        train_path = kv.get("data.train", std::string());
        val_path = kv.get("data.validation", std::string());
        cfg = read_train_config(kv);
        kv.require_all_used();
    }
    if (a.epochs) cfg.epochs = *a.epochs;

    const DatasetPair data = training_data(cfg, train_path, val_path);
    TrainingState s = resumed ? std::move(*resumed) : init_training(cfg, data.train);
    if (resumed) {
        detail::require_shape(data.train.obs_dim() == s.model.obs_dim() && data.train.act_dim() == s.model.act_dim(),
                              "dataset dims do not match the checkpoint");
    }
    const PreparedData prepared = PreparedData::from(s.model, data.train);

    const fs::path out(a.out);
    make_dir(out);
    {
        auto f = open_out(out / "config.txt");
        f << write_train_config(cfg);
    }
    auto metrics = open_out(out / "metrics.csv");
    auto timing = open_out(out / "timing.csv");
    metrics << metrics_csv_header();
    timing << "epoch,wall_seconds\n";

    const auto t0 = std::chrono::steady_clock::now();
    MetricsRow last;
    bool any = false;
    try {
        while (s.epoch < cfg.epochs) {
            last = train_epoch(s, prepared, data.validation, cfg);
            any = true;
            metrics << metrics_csv_line(last) << std::flush;
            timing << last.epoch << ',' << format_double(last.wall_seconds) << '\n';
            if (!a.quiet)
                std::fprintf(stderr, "epoch %zu loss %.5f val_success %.4f (%.2fs)\n", last.epoch, last.train_loss,
                             last.val_success, last.wall_seconds);
        }
    } catch (const NumericalError& e) {
        // The state is rolled back to the last finished epoch; keep it.
        save_checkpoint((out / "checkpoint.txt").string(), cfg, s);
        std::fprintf(stderr, "error: %s (epoch %zu); last good state saved to %s\n", e.what(), s.epoch,
                     (out / "checkpoint.txt").c_str());
        return kExitRuntime;
    }
    save_checkpoint((out / "checkpoint.txt").string(), cfg, s);
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    auto summary = open_out(out / "summary.csv");
    summary << "trial,epochs,final_train_loss,final_val_success,wall_seconds\n";
    summary << to_string(cfg.trial) << ',' << s.epoch << ',' << (any ? format_double(last.train_loss) : "") << ','
            << format_double(s.last_val_success) << ',' << format_double(total) << '\n';
    if (!a.quiet)
        std::fprintf(stderr, "done: %zu epochs, val_success %.4f, %.1fs\n", s.epoch, s.last_val_success, total);
    return 0;
}

int run_diagnose_cmd(const std::string& config, const std::string& out_dir, std::optional<std::uint64_t> seed) {
    KeyValues kv = config.empty() ? KeyValues() : KeyValues::load(config);
    if (seed) kv.set("seed", std::to_string(*seed));
    const DiagnoseConfig d = read_diagnose_config(kv);
    kv.require_all_used();
    const auto runs = run_diagnose(d);
    const fs::path out(out_dir);
    make_dir(out);
    {
        auto f = open_out(out / "samples.csv");
        write_diagnose_samples(f, d, runs);
    }
    auto f = open_out(out / "summary.csv");
    write_diagnose_summary(f, d, runs);
    write_diagnose_summary(std::cout, d, runs);
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& dataset, const std::string& out_dir) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    const Dataset data = load_dataset(dataset);
    if (data.rows() == 0) throw Error("dataset " + dataset + " has no rows");
    check_compatible(ck, data);
    ChainConfig ic = ck.config.infer_chains;
    ic.seed = derive_key(ck.state.seed, detail::kTagInfer);
    const EvalResult r = evaluate_success(ck.state.model, data, ck.config.task, ic, ck.config.success_tol);

    const fs::path out(out_dir);
    make_dir(out);
    auto rows = open_out(out / "eval.csv");
    rows << "row";
    for (std::size_t k = 1; k <= data.act_dim(); ++k) rows << ",pred_" << k;
    rows << ",energy,distance,success\n";
    for (std::size_t i = 0; i < data.rows(); ++i) {
        rows << i;
        for (Eigen::Index k = 0; k < r.inference.actions.rows(); ++k)
            rows << ',' << format_double(r.inference.actions(k, static_cast<Eigen::Index>(i)));
        rows << ',' << format_double(r.inference.energies(static_cast<Eigen::Index>(i))) << ','
             << format_double(r.distance[i]) << ',' << (r.ok[i] ? 1 : 0) << '\n';
    }
    auto summary = open_out(out / "summary.csv");
    summary << "rows,success_rate,tolerance\n"
            << data.rows() << ',' << format_double(r.rate) << ',' << format_double(ck.config.success_tol) << '\n';
    std::cout << "success_rate " << format_double(r.rate) << " over " << data.rows() << " rows\n";
    return 0;
}

int run_gen(const std::string& config, const std::string& out_dir, std::optional<std::uint64_t> seed) {
    KeyValues kv = config.empty() ? KeyValues() : KeyValues::load(config);
    if (seed) kv.set("task.seed", std::to_string(*seed));
    const TaskSpec t = read_task(kv);
    kv.require_all_used();
    const DatasetPair d = generate(t);
    const fs::path out(out_dir);
    make_dir(out);
    save_dataset((out / "train.csv").string(), d.train);
    save_dataset((out / "validation.csv").string(), d.validation);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Energy-based behavior cloning with Langevin samplers"};
    app.require_subcommand(1);

    TrainArgs ta;
    std::uint64_t seed_value = 0;
    auto* train = app.add_subcommand("train", "train a model");
    auto* train_cfg = train->add_option("--config", ta.config, "key = value config file")->check(CLI::ExistingFile);
    train->add_option("--resume", ta.resume, "continue from a checkpoint")->check(CLI::ExistingFile)->excludes(train_cfg);
    train->add_option("--out", ta.out, "output directory")->required();
    auto* train_seed = train->add_option("--seed", seed_value, "override the config seed");
    std::size_t epochs_value = 0;
    auto* train_epochs = train->add_option("--epochs", epochs_value, "override the epoch count");
    train->add_flag("--quiet", ta.quiet, "no progress output");

    std::string diag_cfg, diag_out;
    auto* diag = app.add_subcommand("diagnose", "sampler stationarity check on a quadratic energy");
    diag->add_option("--config", diag_cfg)->check(CLI::ExistingFile);
    diag->add_option("--out", diag_out)->required();
    auto* diag_seed = diag->add_option("--seed", seed_value);

    std::string eval_ckpt, eval_data, eval_out;
    auto* eval = app.add_subcommand("eval", "success rate of a checkpoint on a dataset");
    eval->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
    eval->add_option("--dataset", eval_data)->required()->check(CLI::ExistingFile);
    eval->add_option("--out", eval_out)->required();

    std::string gen_cfg, gen_out;
    auto* gen = app.add_subcommand("gen", "write generated train/validation CSVs");
    gen->add_option("--config", gen_cfg)->check(CLI::ExistingFile);
    gen->add_option("--out", gen_out)->required();
    auto* gen_seed = gen->add_option("--seed", seed_value, "override task.seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*train) {
            if (ta.config.empty() && ta.resume.empty()) throw ConfigError("train needs --config or --resume");
            if (*train_seed) ta.seed = seed_value;
            if (*train_epochs) ta.epochs = epochs_value;
            return run_train(ta);
        }
        const std::optional<std::uint64_t> seed =
            (*diag && *diag_seed) || (*gen && *gen_seed) ? std::optional<std::uint64_t>(seed_value) : std::nullopt;
        if (*diag) return run_diagnose_cmd(diag_cfg, diag_out, seed);
        if (*eval) return run_eval(eval_ckpt, eval_data, eval_out);
        if (*gen) return run_gen(gen_cfg, gen_out, seed);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}

#pragma once

// Synthetic multimodal regression tasks, dataset CSV persistence and the
// success metric used for validation.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "ebmlab/errors.hpp"
#include "ebmlab/rng.hpp"

namespace ebmlab {

enum class TaskKind { two_mode, ring, particle_analog };
enum class Split { train, validation };

inline std::string_view to_string(TaskKind k) {
    switch (k) {
    case TaskKind::two_mode: return "two_mode";
    case TaskKind::ring: return "ring";
    case TaskKind::particle_analog: return "particle_analog";
    }
    return "?";
}
inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "validation"; }

inline TaskKind parse_task_kind(std::string_view s) {
    if (s == "two_mode") return TaskKind::two_mode;
    if (s == "ring") return TaskKind::ring;
    if (s == "particle_analog") return TaskKind::particle_analog;
    throw ConfigError("unknown task kind '" + std::string(s) + "' (expected two_mode, ring or particle_analog)");
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    throw ConfigError("unknown split '" + std::string(s) + "' (expected train or validation)");
}

/// Generator description.
///  two_mode:        x ~ U[-1,1]^obs_dim, y = +/-0.5 * (1,...,1) by fair coin.
///  ring:            act_dim 2, y = 0.5 (cos a, sin a) with a ~ U[0, 2 pi).
///  particle_analog: obs_dim 4 (two goals in [-1,1]^2), act_dim 2, y = one goal.
/// Jitter is Gaussian with std `noise`, truncated at 3 std per coordinate.
struct TaskSpec {
    TaskKind kind = TaskKind::two_mode;
    std::size_t obs_dim = 2;
    std::size_t act_dim = 1;
    double noise = 0.0;
    std::size_t train_rows = 1024;
    std::size_t val_rows = 256;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require_config(obs_dim > 0 && act_dim > 0, "task obs_dim and act_dim must be positive");
        detail::require_config(std::isfinite(noise) && noise >= 0.0, "task noise must be non-negative");
        detail::require_config(train_rows > 0, "task train_rows must be positive");
        if (kind == TaskKind::ring) detail::require_config(act_dim == 2, "ring task requires act_dim = 2");
        if (kind == TaskKind::particle_analog)
            detail::require_config(obs_dim == 4 && act_dim == 2, "particle_analog requires obs_dim = 4, act_dim = 2");
    }

    /// Largest Euclidean distance jitter can move an action off its mode.
    double noise_bound() const { return 3.0 * noise * std::sqrt(static_cast<double>(act_dim)); }

    friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// Observation/action pairs, one per column.
struct Dataset {
    Eigen::MatrixXd obs;  // obs_dim x rows
    Eigen::MatrixXd act;  // act_dim x rows
    Split split = Split::train;

    std::size_t obs_dim() const noexcept { return static_cast<std::size_t>(obs.rows()); }
    std::size_t act_dim() const noexcept { return static_cast<std::size_t>(act.rows()); }
    std::size_t rows() const noexcept { return static_cast<std::size_t>(obs.cols()); }

    std::span<const double> x(std::size_t r) const { return {obs.col(static_cast<Eigen::Index>(r)).data(), obs_dim()}; }
    std::span<const double> y(std::size_t r) const { return {act.col(static_cast<Eigen::Index>(r)).data(), act_dim()}; }

    void validate() const {
        detail::require_shape(obs.cols() == act.cols(), "dataset observation and action counts differ");
        detail::require_config(obs_dim() > 0 && act_dim() > 0, "dataset dims must be positive");
        if (!obs.allFinite() || !act.allFinite()) throw NumericalError("dataset contains non-finite values");
    }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.split == b.split && a.obs.rows() == b.obs.rows() && a.act.rows() == b.act.rows() &&
               a.obs.cols() == b.obs.cols() && a.obs == b.obs && a.act == b.act;
    }
};

struct DatasetPair {
    Dataset train;
    Dataset validation;
};

namespace detail {

inline Dataset generate_split(const TaskSpec& spec, Split split, std::size_t rows) {
    Dataset d;
    d.split = split;
    d.obs.resize(static_cast<Eigen::Index>(spec.obs_dim), static_cast<Eigen::Index>(rows));
    d.act.resize(static_cast<Eigen::Index>(spec.act_dim), static_cast<Eigen::Index>(rows));
    const std::uint64_t tag = split == Split::train ? 1 : 2;
    for (std::size_t r = 0; r < rows; ++r) {
        CounterStream rng(derive_key(spec.seed, tag, r));
        const auto c = static_cast<Eigen::Index>(r);
        for (Eigen::Index k = 0; k < d.obs.rows(); ++k) d.obs(k, c) = rng.uniform(-1.0, 1.0);
        switch (spec.kind) {
        case TaskKind::two_mode: {
            const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
            d.act.col(c).setConstant(0.5 * sign);
            break;
        }
        case TaskKind::ring: {
            const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
            d.act(0, c) = 0.5 * std::cos(a);
            d.act(1, c) = 0.5 * std::sin(a);
            break;
        }
        case TaskKind::particle_analog: {
            const Eigen::Index goal = rng.uniform() < 0.5 ? 0 : 2;
            d.act(0, c) = d.obs(goal, c);
            d.act(1, c) = d.obs(goal + 1, c);
            break;
        }
        }
        if (spec.noise > 0.0)
            for (Eigen::Index k = 0; k < d.act.rows(); ++k)
                d.act(k, c) += spec.noise * std::clamp(rng.normal(), -3.0, 3.0);
    }
    return d;
}

} // namespace detail

/// Deterministic train/validation datasets for `spec`.
inline DatasetPair generate(const TaskSpec& spec) {
    spec.validate();
    return {detail::generate_split(spec, Split::train, spec.train_rows),
            detail::generate_split(spec, Split::validation, spec.val_rows)};
}

/// Euclidean distance from `y` to the nearest valid mode for observation `x`.
inline double nearest_mode_distance(const TaskSpec& spec, std::span<const double> x, std::span<const double> y) {
    detail::require_shape(x.size() == spec.obs_dim && y.size() == spec.act_dim,
                          "observation/action dims do not match the task");
    switch (spec.kind) {
    case TaskKind::two_mode: {
        double dp = 0.0, dm = 0.0;
        for (double v : y) {
            dp += (v - 0.5) * (v - 0.5);
            dm += (v + 0.5) * (v + 0.5);
        }
        return std::sqrt(std::min(dp, dm));
    }
    case TaskKind::ring: return std::abs(std::hypot(y[0], y[1]) - 0.5);
    case TaskKind::particle_analog: {
        const double d0 = std::hypot(y[0] - x[0], y[1] - x[1]);
        const double d1 = std::hypot(y[0] - x[2], y[1] - x[3]);
        return std::min(d0, d1);
    }
    }
    return std::numeric_limits<double>::infinity();
}

inline bool success(const TaskSpec& spec, std::span<const double> x, std::span<const double> y, double tol) {
    return nearest_mode_distance(spec, x, y) <= tol;
}

// ---------------------------------------------------------------------------
// CSV persistence:
//   obs_dim,act_dim,split
//   <obs_dim>,<act_dim>,<split>
//   x_1,..,x_obs,y_1,..,y_act
//   one line per row

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> csv_columns(std::size_t obs_dim, std::size_t act_dim) {
    std::vector<std::string> cols;
    for (std::size_t k = 1; k <= obs_dim; ++k) cols.push_back("x_" + std::to_string(k));
    for (std::size_t k = 1; k <= act_dim; ++k) cols.push_back("y_" + std::to_string(k));
    return cols;
}

inline void write_dataset(std::ostream& out, const Dataset& d) {
    out << "obs_dim,act_dim,split\n" << d.obs_dim() << ',' << d.act_dim() << ',' << to_string(d.split) << '\n';
    const auto cols = csv_columns(d.obs_dim(), d.act_dim());
    for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
    out << '\n';
    std::string line;
    for (std::size_t r = 0; r < d.rows(); ++r) {
        line.clear();
        for (double v : d.x(r)) line += format_double(v) + ',';
        for (double v : d.y(r)) line += format_double(v) + ',';
        line.back() = '\n';
        out << line;
    }
}

inline void save_dataset(const std::string& path, const Dataset& d) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    write_dataset(out, d);
    if (!out) throw Error("failed writing " + path);
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view s, std::size_t line, std::string_view column) {
    s = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ParseError("column " + std::string(column) + ": invalid number '" + std::string(s) + "'", line);
    return v;
}

inline std::size_t parse_size(std::string_view s, std::size_t line, std::string_view column) {
    s = trim(s);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ParseError("column " + std::string(column) + ": invalid integer '" + std::string(s) + "'", line);
    return v;
}

} // namespace detail

inline Dataset read_dataset(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    auto next = [&]() -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            if (!detail::trim(line).empty()) return true;
        }
        return false;
    };

    const std::vector<std::string> header_cols{"obs_dim", "act_dim", "split"};
    if (!next()) throw ParseError("empty file: missing header line", 1);
    const auto header = detail::split_csv(line);
    for (std::size_t k = 0; k < header_cols.size(); ++k)
        if (k >= header.size() || detail::trim(header[k]) != header_cols[k])
            throw ParseError("missing header column " + header_cols[k], lineno);

    if (!next()) throw ParseError("missing header values", lineno + 1);
    const auto vals = detail::split_csv(line);
    for (std::size_t k = vals.size(); k < header_cols.size(); ++k)
        throw ParseError("missing column " + header_cols[k], lineno);
    const std::size_t od = detail::parse_size(vals[0], lineno, "obs_dim");
    const std::size_t ad = detail::parse_size(vals[1], lineno, "act_dim");
    Split split;
    try {
        split = parse_split(detail::trim(vals[2]));
    } catch (const ConfigError& e) {
        throw ParseError(e.what(), lineno);
    }
    if (od == 0 || ad == 0) throw ParseError("obs_dim and act_dim must be positive", lineno);

    const auto cols = csv_columns(od, ad);
    if (!next()) throw ParseError("missing column-name line", lineno + 1);
    const auto names = detail::split_csv(line);
    for (std::size_t k = 0; k < cols.size(); ++k)
        if (k >= names.size() || detail::trim(names[k]) != cols[k]) throw ParseError("missing column " + cols[k], lineno);
    if (names.size() > cols.size()) throw ParseError("unexpected extra column '" + std::string(names[cols.size()]) + "'", lineno);

    std::vector<double> values;
    std::size_t rows = 0;
    while (next()) {
        const auto fields = detail::split_csv(line);
        if (fields.size() < cols.size()) throw ParseError("missing column " + cols[fields.size()], lineno);
        if (fields.size() > cols.size()) throw ParseError("too many columns", lineno);
        for (std::size_t k = 0; k < cols.size(); ++k) values.push_back(detail::parse_double(fields[k], lineno, cols[k]));
        ++rows;
    }

    Dataset d;
    d.split = split;
    d.obs.resize(static_cast<Eigen::Index>(od), static_cast<Eigen::Index>(rows));
    d.act.resize(static_cast<Eigen::Index>(ad), static_cast<Eigen::Index>(rows));
    const std::size_t w = od + ad;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < od; ++k) d.obs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r)) = values[r * w + k];
        for (std::size_t k = 0; k < ad; ++k)
            d.act(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r)) = values[r * w + od + k];
    }
    if (!d.obs.allFinite() || !d.act.allFinite()) throw ParseError("dataset contains non-finite values");
    return d;
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_dataset(in);
}

} // namespace ebmlab

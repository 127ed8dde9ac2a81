#pragma once

// Versioned plain-text checkpoints. Numbers are written with 17 significant
// digits, which round-trips every double exactly.
//
//   ebmlab-checkpoint 1
//   epoch <n>
//   seed <s>
//   last_val_success <r>
//   begin config
//   <key = value lines>
//   end config
//   begin model conditional
//   layer_sizes <k> <s_1> ... <s_k>
//   obs_min/obs_max/act_min/act_max <d> <values...>
//   params <n>
//   <n lines, one value each>
//   end model
//   begin adam conditional
//   t <steps>
//   hyper <lr> <beta1> <beta2> <epsilon>
//   m <n> / v <n>, each followed by n lines
//   end adam
//   (optional model/adam blocks named "marginal")

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "ebmlab/config.hpp"
#include "ebmlab/data.hpp"
#include "ebmlab/energy_model.hpp"
#include "ebmlab/errors.hpp"
#include "ebmlab/net.hpp"
#include "ebmlab/optim.hpp"
#include "ebmlab/trainer.hpp"

namespace ebmlab {

inline constexpr int kCheckpointVersion = 1;

/// A checkpoint written by an incompatible version of the format.
struct VersionError : ConfigError {
    using ConfigError::ConfigError;
};

struct Checkpoint {
    TrainConfig config;
    TrainingState state;
};

namespace detail {

inline void write_values(std::ostream& out, const std::string& tag, std::span<const double> v) {
    out << tag << ' ' << v.size() << '\n';
    for (double x : v) out << format_double(x) << '\n';
}

inline void write_inline(std::ostream& out, const std::string& tag, std::span<const double> v) {
    out << tag << ' ' << v.size();
    for (double x : v) out << ' ' << format_double(x);
    out << '\n';
}

inline void write_net(std::ostream& out, const std::string& name, const DenseEnergyNet& net,
                      const Normalizer* obs, const Normalizer& act) {
    out << "begin model " << name << '\n';
    out << "layer_sizes " << net.layer_sizes().size();
    for (std::size_t s : net.layer_sizes()) out << ' ' << s;
    out << '\n';
    if (obs) {
        write_inline(out, "obs_min", obs->min());
        write_inline(out, "obs_max", obs->max());
    }
    write_inline(out, "act_min", act.min());
    write_inline(out, "act_max", act.max());
    write_values(out, "params", net.params());
    out << "end model\n";
}

inline void write_adam(std::ostream& out, const std::string& name, const AdamState& a) {
    out << "begin adam " << name << '\n';
    out << "t " << a.t << '\n';
    out << "hyper " << format_double(a.hyper.learning_rate) << ' ' << format_double(a.hyper.beta1) << ' '
        << format_double(a.hyper.beta2) << ' ' << format_double(a.hyper.epsilon) << '\n';
    write_values(out, "m", a.m);
    write_values(out, "v", a.v);
    out << "end adam\n";
}

/// Line reader with position-aware errors.
class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    std::string next() {
        std::string line;
        if (!std::getline(in_, line)) throw ParseError("unexpected end of checkpoint", line_ + 1);
        ++line_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    }

    std::vector<std::string> tokens() {
        std::istringstream ss(next());
        std::vector<std::string> out;
        for (std::string t; ss >> t;) out.push_back(t);
        return out;
    }

    std::vector<std::string> expect(std::string_view tag, std::size_t min_tokens = 2) {
        auto t = tokens();
        if (t.empty() || t[0] != tag || t.size() < min_tokens)
            throw ParseError("expected '" + std::string(tag) + "'", line_);
        return t;
    }

    double number(std::string_view s) const {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("invalid number '" + std::string(s) + "'", line_);
        return v;
    }

    template <typename Int>
    Int integer(std::string_view s) const {
        Int v{};
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("invalid integer '" + std::string(s) + "'", line_);
        return v;
    }

    std::vector<double> values(std::string_view tag) {
        const auto t = expect(tag);
        const auto n = integer<std::size_t>(t[1]);
        std::vector<double> out;
        out.reserve(n);
        for (std::size_t k = 0; k < n; ++k) out.push_back(number(next()));
        return out;
    }

    std::vector<double> inline_values(std::string_view tag) {
        const auto t = expect(tag);
        const auto n = integer<std::size_t>(t[1]);
        if (t.size() != n + 2) throw ParseError("'" + std::string(tag) + "' declares " + t[1] + " values", line_);
        std::vector<double> out;
        for (std::size_t k = 0; k < n; ++k) out.push_back(number(t[k + 2]));
        return out;
    }

    std::size_t line() const { return line_; }

private:
    std::istream& in_;
    std::size_t line_ = 0;
};

struct NetBlock {
    DenseEnergyNet net;
    std::optional<Normalizer> obs;
    Normalizer act;
};

inline NetBlock read_net(LineReader& r, std::string_view name, bool with_obs) {
    const auto head = r.expect("begin", 3);
    if (head[1] != "model" || head[2] != name) throw ParseError("expected 'begin model " + std::string(name) + "'", r.line());
    const auto ls = r.expect("layer_sizes");
    const auto k = r.integer<std::size_t>(ls[1]);
    if (ls.size() != k + 2) throw ParseError("layer_sizes count mismatch", r.line());
    std::vector<std::size_t> sizes;
    for (std::size_t i = 0; i < k; ++i) sizes.push_back(r.integer<std::size_t>(ls[i + 2]));
    NetBlock b;
    if (with_obs) {
        auto lo = r.inline_values("obs_min");
        auto hi = r.inline_values("obs_max");
        b.obs = Normalizer(std::move(lo), std::move(hi));
    }
    auto lo = r.inline_values("act_min");
    auto hi = r.inline_values("act_max");
    b.act = Normalizer(std::move(lo), std::move(hi));
    try {
        b.net = DenseEnergyNet(std::move(sizes), r.values("params"));
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(std::string("corrupt model block: ") + e.what(), r.line());
    }
    r.expect("end", 2);
    return b;
}

inline AdamState read_adam(LineReader& r, std::string_view name) {
    const auto head = r.expect("begin", 3);
    if (head[1] != "adam" || head[2] != name) throw ParseError("expected 'begin adam " + std::string(name) + "'", r.line());
    AdamState a;
    a.t = r.integer<std::uint64_t>(r.expect("t")[1]);
    const auto h = r.expect("hyper", 5);
    a.hyper = {r.number(h[1]), r.number(h[2]), r.number(h[3]), r.number(h[4])};
    a.m = r.values("m");
    a.v = r.values("v");
    r.expect("end", 2);
    return a;
}

} // namespace detail

inline void write_checkpoint(std::ostream& out, const TrainConfig& cfg, const TrainingState& s) {
    out << "ebmlab-checkpoint " << kCheckpointVersion << '\n';
    out << "epoch " << s.epoch << '\n';
    out << "seed " << s.seed << '\n';
    out << "last_val_success " << format_double(s.last_val_success) << '\n';
    out << "begin config\n" << write_train_config(cfg) << "end config\n";
    detail::write_net(out, "conditional", s.model.net(), &s.model.obs_normalizer(), s.model.act_normalizer());
    detail::write_adam(out, "conditional", s.model_opt);
    if (s.marginal) {
        detail::write_net(out, "marginal", s.marginal->net(), nullptr, s.marginal->act_normalizer());
        detail::write_adam(out, "marginal", *s.marginal_opt);
    }
    out << "end checkpoint\n";
}

inline Checkpoint read_checkpoint(std::istream& in) {
    detail::LineReader r(in);
    const auto head = r.tokens();
    if (head.size() != 2 || head[0] != "ebmlab-checkpoint") throw ParseError("not an ebmlab checkpoint", 1);
    if (head[1] != std::to_string(kCheckpointVersion))
        throw VersionError("checkpoint version " + head[1] + " is not supported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    Checkpoint c;
    c.state.epoch = r.integer<std::size_t>(r.expect("epoch")[1]);
    c.state.seed = r.integer<std::uint64_t>(r.expect("seed")[1]);
    c.state.last_val_success = r.number(r.expect("last_val_success")[1]);
    r.expect("begin", 2);
    std::string text;
    for (std::string line = r.next(); line != "end config"; line = r.next()) text += line + '\n';
    c.config = read_train_config(KeyValues::parse_string(text));

    detail::NetBlock cond = detail::read_net(r, "conditional", true);
    c.state.model = ConditionalEbm(std::move(cond.net), std::move(*cond.obs), std::move(cond.act));
    c.state.model_opt = detail::read_adam(r, "conditional");
    if (c.state.model_opt.m.size() != c.state.model.net().param_count() ||
        c.state.model_opt.v.size() != c.state.model.net().param_count())
        throw ParseError("optimizer state size does not match the conditional model", r.line());
    if (c.config.mas.enabled) {
        detail::NetBlock marg = detail::read_net(r, "marginal", false);
        c.state.marginal = MarginalEbm(std::move(marg.net), std::move(marg.act));
        c.state.marginal_opt = detail::read_adam(r, "marginal");
        if (c.state.marginal_opt->m.size() != c.state.marginal->net().param_count())
            throw ParseError("optimizer state size does not match the marginal model", r.line());
    }
    if (r.tokens() != std::vector<std::string>{"end", "checkpoint"}) throw ParseError("missing 'end checkpoint'", r.line());
    return c;
}

inline void save_checkpoint(const std::string& path, const TrainConfig& cfg, const TrainingState& s) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    write_checkpoint(out, cfg, s);
    if (!out) throw Error("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint " + path);
    return read_checkpoint(in);
}

/// Throws ShapeError unless the checkpointed model accepts `data`.
inline void check_compatible(const Checkpoint& c, const Dataset& data) {
    detail::require_shape(data.obs_dim() == c.state.model.obs_dim() && data.act_dim() == c.state.model.act_dim(),
                          "dataset dims (" + std::to_string(data.obs_dim()) + ", " + std::to_string(data.act_dim()) +
                              ") do not match checkpoint model (" + std::to_string(c.state.model.obs_dim()) + ", " +
                              std::to_string(c.state.model.act_dim()) + ")");
}

} // namespace ebmlab

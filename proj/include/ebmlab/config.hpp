#pragma once

// Flat "key = value" configuration files. Blank lines and lines starting with
// '#' are ignored. Every key must be consumed by the reader; leftovers are a
// config error, so typos never fall back to defaults silently.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "ebmlab/data.hpp"
#include "ebmlab/errors.hpp"
#include "ebmlab/samplers.hpp"

namespace ebmlab {

class KeyValues {
public:
    KeyValues() = default;

    static KeyValues parse(std::istream& in) {
        KeyValues kv;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string_view t = detail::trim(line);
            if (t.empty() || t.front() == '#') continue;
            const std::size_t eq = t.find('=');
            if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", lineno);
            const std::string key(detail::trim(t.substr(0, eq)));
            const std::string value(detail::trim(t.substr(eq + 1)));
            if (key.empty()) throw ParseError("empty key", lineno);
            if (kv.values_.count(key)) throw ParseError("duplicate key '" + key + "'", lineno);
            kv.values_[key] = value;
            kv.lines_[key] = lineno;
            kv.order_.push_back(key);
        }
        return kv;
    }

    static KeyValues parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static KeyValues load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        return parse(in);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, std::string value) {
        if (!values_.count(key)) order_.push_back(key);
        values_[key] = std::move(value);
    }

    std::optional<std::string> raw(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        used_.insert(key);
        return it->second;
    }

    std::string get(const std::string& key, const std::string& fallback) const { return raw(key).value_or(fallback); }

    double get(const std::string& key, double fallback) const {
        auto v = raw(key);
        return v ? to_double(key, *v) : fallback;
    }

    template <typename Int>
        requires std::is_integral_v<Int> && (!std::is_same_v<Int, bool>)
    Int get(const std::string& key, Int fallback) const {
        auto v = raw(key);
        if (!v) return fallback;
        Int out{};
        const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || ptr != v->data() + v->size() || v->empty())
            throw ConfigError(where(key) + "expected an integer, got '" + *v + "'");
        return out;
    }

    bool get(const std::string& key, bool fallback) const {
        auto v = raw(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw ConfigError(where(key) + "expected true/false, got '" + *v + "'");
    }

    /// Throws listing any key no reader asked for.
    void require_all_used() const {
        std::string unknown;
        for (const auto& k : order_)
            if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
        if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
    }

    const std::vector<std::string>& keys() const { return order_; }

    std::string where(const std::string& key) const {
        auto it = lines_.find(key);
        return "config key '" + key + "'" + (it != lines_.end() ? " (line " + std::to_string(it->second) + ")" : "") +
               ": ";
    }

private:
    double to_double(const std::string& key, const std::string& v) const {
        double out = 0.0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty() || !std::isfinite(out))
            throw ConfigError(where(key) + "expected a finite number, got '" + v + "'");
        return out;
    }

    std::map<std::string, std::string> values_;
    std::map<std::string, std::size_t> lines_;
    std::vector<std::string> order_;
    mutable std::set<std::string> used_;
};

/// Accumulates "key = value" lines in insertion order.
class KeyValueWriter {
public:
    void put(const std::string& key, const std::string& v) { text_ += key + " = " + v + "\n"; }
    void put(const std::string& key, std::string_view v) { put(key, std::string(v)); }
    void put(const std::string& key, const char* v) { put(key, std::string(v)); }
    void put(const std::string& key, double v) { put(key, format_double(v)); }
    void put(const std::string& key, bool v) { put(key, std::string(v ? "true" : "false")); }
    template <typename Int>
        requires std::is_integral_v<Int> && (!std::is_same_v<Int, bool>)
    void put(const std::string& key, Int v) {
        put(key, std::to_string(v));
    }
    void comment(const std::string& c) { text_ += "# " + c + "\n"; }
    const std::string& str() const { return text_; }

private:
    std::string text_;
};

// ---------------------------------------------------------------------------
// Section readers/writers shared by every subcommand.

inline TaskSpec read_task(const KeyValues& kv, const TaskSpec& defaults = {}) {
    TaskSpec t = defaults;
    t.kind = parse_task_kind(kv.get("task.kind", std::string(to_string(defaults.kind))));
    t.obs_dim = kv.get("task.obs_dim", t.obs_dim);
    t.act_dim = kv.get("task.act_dim", t.act_dim);
    t.noise = kv.get("task.noise", t.noise);
    t.train_rows = kv.get("task.train_rows", t.train_rows);
    t.val_rows = kv.get("task.val_rows", t.val_rows);
    t.seed = kv.get("task.seed", t.seed);
    t.validate();
    return t;
}

inline void write_task(KeyValueWriter& w, const TaskSpec& t) {
    w.put("task.kind", to_string(t.kind));
    w.put("task.obs_dim", t.obs_dim);
    w.put("task.act_dim", t.act_dim);
    w.put("task.noise", t.noise);
    w.put("task.train_rows", t.train_rows);
    w.put("task.val_rows", t.val_rows);
    w.put("task.seed", t.seed);
}

/// Reads `<prefix>.*` chain keys on top of `defaults`. The schedule horizon
/// always equals the iteration count (minimum 1).
inline ChainConfig read_chain(const KeyValues& kv, const std::string& prefix, const ChainConfig& defaults) {
    ChainConfig c = defaults;
    const std::string p = prefix + ".";
    c.formulation = parse_formulation(kv.get(p + "formulation", std::string(to_string(c.formulation))));
    c.iterations = kv.get(p + "iterations", c.iterations);
    c.step_schedule.start = kv.get(p + "step_start", c.step_schedule.start);
    c.step_schedule.end = kv.get(p + "step_end", c.step_schedule.end);
    c.step_schedule.power = kv.get(p + "step_power", c.step_schedule.power);
    c.step_schedule.horizon = std::max<std::size_t>(1, c.iterations);
    c.noise_scale = kv.get(p + "sigma", c.noise_scale);
    const double clip = kv.get(p + "clip_fraction", c.per_step_clip_fraction.value_or(0.0));
    c.per_step_clip_fraction = clip > 0.0 ? std::optional<double>(clip) : std::nullopt;
    c.clamp_to_domain = kv.get(p + "clamp_to_domain", c.clamp_to_domain);
    c.domain_margin = kv.get(p + "margin", c.domain_margin);
    c.num_chains = kv.get(p + "num_chains", c.num_chains);
    c.strategy = parse_strategy(kv.get(p + "strategy", std::string(to_string(c.strategy))));
    c.burn_in = kv.get(p + "burn_in", c.burn_in);
    c.validate();
    return c;
}

inline void write_chain(KeyValueWriter& w, const std::string& prefix, const ChainConfig& c) {
    const std::string p = prefix + ".";
    w.put(p + "formulation", to_string(c.formulation));
    w.put(p + "iterations", c.iterations);
    w.put(p + "step_start", c.step_schedule.start);
    w.put(p + "step_end", c.step_schedule.end);
    w.put(p + "step_power", c.step_schedule.power);
    w.put(p + "sigma", c.noise_scale);
    w.put(p + "clip_fraction", c.per_step_clip_fraction.value_or(0.0));
    w.put(p + "clamp_to_domain", c.clamp_to_domain);
    w.put(p + "margin", c.domain_margin);
    w.put(p + "num_chains", c.num_chains);
    w.put(p + "strategy", to_string(c.strategy));
    w.put(p + "burn_in", c.burn_in);
}

} // namespace ebmlab

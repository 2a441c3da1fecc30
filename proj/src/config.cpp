#include "rnas/config.hpp"

#include "rnas/hash.hpp"

namespace rnas {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Typed access to one config section; every error names section.key.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
    }

    void allow(std::initializer_list<std::string_view> keys) const {
        for (const auto& [k, v] : j_.items()) {
            if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
                throw ConfigError("unknown config key '" + name_ + "." + k + "'");
            }
        }
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& raw(const char* key) const { return j_.at(key); }
    std::string path(const char* key) const { return name_ + "." + key; }

    template <typename T>
    void read(const char* key, T& out) const {
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(path(key) + ": expected true or false");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (!v.is_number_unsigned()) throw ConfigError(path(key) + ": expected a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
        }
        out = v.get<T>();
    }

private:
    const json& j_;
    std::string name_;
};

template <typename F>
void rethrow_as_config(F f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace

json default_eval_config() {
    return {
        {"kd_weights", {{"vanilla_kd", 0.5}, {"probe", 0.25}, {"logits_mse", 0.25}}},
        {"temperature", 2.0},
        {"learning_rate", 5e-4},
        {"epochs", 15},
        {"similarity_threshold", 0.7},
        {"robustness_samples", 200},
        {"dataset", "toy_sentiment"},
    };
}

RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    cfg.dispatch.eval_config = default_eval_config();
    const Section root(j, "config");
    root.allow({"evaluator", "engine", "fitness", "space", "shape", "surrogate", "dispatch", "eval_config"});

    if (root.has("evaluator")) {
        std::string kind;
        root.read("evaluator", kind);
        if (kind == "surrogate") {
            cfg.evaluator = EvaluatorKind::Surrogate;
        } else if (kind == "external") {
            cfg.evaluator = EvaluatorKind::External;
        } else {
            throw ConfigError("config.evaluator: expected \"surrogate\" or \"external\", got \"" + kind + "\"");
        }
    }

    if (root.has("engine")) {
        const Section s(root.raw("engine"), "engine");
        s.allow({"population", "tournament_size", "init_ops", "patience", "max_evaluations", "seed",
                 "max_in_flight", "init_retry_cap"});
        EngineConfig& e = cfg.engine;
        s.read("population", e.capacity);
        s.read("tournament_size", e.tournament_size);
        s.read("patience", e.patience);
        s.read("max_evaluations", e.max_evaluations);
        s.read("seed", e.seed);
        s.read("max_in_flight", e.max_in_flight);
        s.read("init_retry_cap", e.init_retry_cap);
        if (s.has("init_ops")) {
            const json& r = s.raw("init_ops");
            if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer()) {
                throw ConfigError("engine.init_ops: expected [min, max]");
            }
            e.init_ops_min = r[0].get<int>();
            e.init_ops_max = r[1].get<int>();
        }
    }
    if (root.has("fitness")) {
        const Section s(root.raw("fitness"), "fitness");
        s.allow({"mu1", "mu2", "mu3"});
        s.read("mu1", cfg.engine.weights.mu1);
        s.read("mu2", cfg.engine.weights.mu2);
        s.read("mu3", cfg.engine.weights.mu3);
    }
    if (root.has("space")) {
        rethrow_as_config([&] { cfg.space = space_from_json(root.raw("space")); });
    }
    if (root.has("shape")) {
        const Section s(root.raw("shape"), "shape");
        s.allow({"vocab_size", "max_positions", "num_segments", "num_classes"});
        s.read("vocab_size", cfg.shape.vocab_size);
        s.read("max_positions", cfg.shape.max_positions);
        s.read("num_segments", cfg.shape.num_segments);
        s.read("num_classes", cfg.shape.num_classes);
        for (auto v : {cfg.shape.vocab_size, cfg.shape.max_positions, cfg.shape.num_segments, cfg.shape.num_classes}) {
            if (v < 1) throw ConfigError("shape: all sizes must be positive");
        }
    }
    if (root.has("surrogate")) {
        rethrow_as_config([&] { cfg.surrogate = surrogate_from_json(root.raw("surrogate")); });
    }
    cfg.surrogate.shape = cfg.shape;
    if (root.has("dispatch")) {
        const Section s(root.raw("dispatch"), "dispatch");
        s.allow({"job_timeout_s", "ping_interval_s", "max_missed_pings", "retry_cap", "pool_empty_grace_s",
                 "workers", "listen", "min_workers", "worker_wait_s"});
        auto& d = cfg.dispatch;
        s.read("job_timeout_s", d.job_timeout_s);
        s.read("ping_interval_s", d.ping_interval_s);
        s.read("max_missed_pings", d.max_missed_pings);
        s.read("retry_cap", d.retry_cap);
        s.read("pool_empty_grace_s", d.pool_empty_grace_s);
        s.read("min_workers", cfg.pool.min_workers);
        s.read("worker_wait_s", cfg.pool.worker_wait_s);
        if (s.has("listen")) {
            std::string at;
            s.read("listen", at);
            cfg.pool.listen = at;
        }
        if (s.has("workers")) {
            const json& w = s.raw("workers");
            if (!w.is_array()) throw ConfigError("dispatch.workers: expected an array of \"HOST:PORT\" strings");
            for (const auto& e : w) {
                if (!e.is_string()) throw ConfigError("dispatch.workers: expected an array of \"HOST:PORT\" strings");
                cfg.pool.workers.push_back(e.get<std::string>());
            }
        }
        if (cfg.pool.min_workers < 1) throw ConfigError("dispatch.min_workers: must be at least 1");
    }
    if (root.has("eval_config")) {
        const json& e = root.raw("eval_config");
        if (!e.is_object()) throw ConfigError("eval_config: expected an object");
        cfg.dispatch.eval_config.merge_patch(e);
    }

    rethrow_as_config([&] {
        cfg.engine.check();
        cfg.space.check();
        cfg.dispatch.check();
        for (const auto& w : cfg.pool.workers) dispatch::parse_endpoint(w);
        if (cfg.pool.listen) dispatch::parse_endpoint(*cfg.pool.listen);
        if (cfg.engine.weights.mu1 < 0 || cfg.engine.weights.mu2 < 0 || cfg.engine.weights.mu3 < 0 ||
            !std::isfinite(cfg.engine.weights.mu1 + cfg.engine.weights.mu2 + cfg.engine.weights.mu3)) {
            throw ConfigError("fitness: weights must be finite and non-negative");
        }
    });
    return cfg;
}

RunConfig parse_config(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what(), e.byte, "");
    }
    return config_from_json(j);
}

ordered_json to_json(const RunConfig& cfg) {
    ordered_json j;
    j["evaluator"] = cfg.evaluator == EvaluatorKind::Surrogate ? "surrogate" : "external";
    ordered_json engine = to_json(cfg.engine);
    engine.erase("weights");
    j["engine"] = engine;
    j["fitness"] = {{"mu1", cfg.engine.weights.mu1}, {"mu2", cfg.engine.weights.mu2}, {"mu3", cfg.engine.weights.mu3}};
    j["space"] = to_json(cfg.space);
    j["shape"] = {{"vocab_size", cfg.shape.vocab_size},
                  {"max_positions", cfg.shape.max_positions},
                  {"num_segments", cfg.shape.num_segments},
                  {"num_classes", cfg.shape.num_classes}};
    j["surrogate"] = to_json(cfg.surrogate);
    ordered_json d;
    d["job_timeout_s"] = cfg.dispatch.job_timeout_s;
    d["ping_interval_s"] = cfg.dispatch.ping_interval_s;
    d["max_missed_pings"] = cfg.dispatch.max_missed_pings;
    d["retry_cap"] = cfg.dispatch.retry_cap;
    d["pool_empty_grace_s"] = cfg.dispatch.pool_empty_grace_s;
    d["workers"] = cfg.pool.workers;
    if (cfg.pool.listen) d["listen"] = *cfg.pool.listen;
    d["min_workers"] = cfg.pool.min_workers;
    d["worker_wait_s"] = cfg.pool.worker_wait_s;
    j["dispatch"] = d;
    j["eval_config"] = ordered_json::parse(cfg.dispatch.eval_config.dump());
    return j;
}

std::string effective_digest(const RunConfig& cfg) {
    ordered_json j;
    j["engine"] = to_json(cfg.engine);
    j["space"] = to_json(cfg.space);
    j["shape"] = {cfg.shape.vocab_size, cfg.shape.max_positions, cfg.shape.num_segments, cfg.shape.num_classes};
    j["evaluator"] = cfg.evaluator == EvaluatorKind::Surrogate ? "surrogate" : "external";
    if (cfg.evaluator == EvaluatorKind::Surrogate) j["surrogate"] = to_json(cfg.surrogate);
    return to_hex(fnv1a(j.dump()));
}

}  // namespace rnas

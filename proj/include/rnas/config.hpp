#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rnas/dispatch/dispatcher.hpp"
#include "rnas/engine.hpp"

namespace rnas {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EvaluatorKind { Surrogate, External };

struct WorkerPoolConfig {
    std::vector<std::string> workers;  // HOST:PORT of listening workers to dial
    std::optional<std::string> listen;  // HOST:PORT to accept worker connections on
    int min_workers = 1;
    double worker_wait_s = 60.0;
};

/// Everything a search run needs, loaded from one JSON file.
struct RunConfig {
    EngineConfig engine;
    SearchSpaceDef space;
    ModelShapeConfig shape;
    SurrogateConfig surrogate;
    dispatch::DispatchConfig dispatch;
    WorkerPoolConfig pool;
    EvaluatorKind evaluator = EvaluatorKind::Surrogate;
};

/// Distillation and attack settings passed through to workers untouched.
nlohmann::json default_eval_config();

/// Applies `j` on top of the defaults. Unknown keys, wrong types and
/// out-of-range values throw ConfigError naming the key.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig parse_config(std::string_view text);

nlohmann::ordered_json to_json(const RunConfig& cfg);

/// Digest of the settings that determine a run's trajectory (engine, space,
/// fitness weights, shape, surrogate). Checkpoints carry it.
std::string effective_digest(const RunConfig& cfg);

}  // namespace rnas

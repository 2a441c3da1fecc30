#include <gtest/gtest.h>

#include "rnas/config.hpp"

using namespace rnas;
using nlohmann::json;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    } catch (const ParseError& e) {
        return std::string("parse: ") + e.what();
    }
    return "";
}

}  // namespace

TEST(Config, EmptyObjectGivesPublishedDefaults) {
    const RunConfig c = parse_config("{}");
    EXPECT_EQ(c.engine.capacity, 100);
    EXPECT_EQ(c.engine.tournament_size, 2);
    EXPECT_EQ(c.engine.weights.mu1, 1.0);
    EXPECT_EQ(c.engine.weights.mu2, 1.0);
    EXPECT_EQ(c.engine.weights.mu3, 2.0);
    EXPECT_EQ(c.evaluator, EvaluatorKind::Surrogate);
    EXPECT_EQ(c.space, domain_space());

    const json& e = c.dispatch.eval_config;
    EXPECT_EQ(e["kd_weights"]["vanilla_kd"], 0.5);
    EXPECT_EQ(e["kd_weights"]["probe"], 0.25);
    EXPECT_EQ(e["kd_weights"]["logits_mse"], 0.25);
    EXPECT_EQ(e["temperature"], 2.0);
    EXPECT_EQ(e["learning_rate"], 5e-4);
    EXPECT_EQ(e["epochs"], 15);
    EXPECT_EQ(e["similarity_threshold"], 0.7);
}

TEST(Config, SectionsOverrideIndividualKeys) {
    const RunConfig c = parse_config(R"({
        "evaluator": "external",
        "engine": {"population": 20, "init_ops": [2, 4], "seed": 99, "max_in_flight": 4},
        "fitness": {"mu3": 0.5},
        "shape": {"num_classes": 3},
        "dispatch": {"job_timeout_s": 60, "workers": ["127.0.0.1:9000"], "min_workers": 1},
        "eval_config": {"epochs": 3, "kd_weights": {"probe": 0.3}}
    })");
    EXPECT_EQ(c.evaluator, EvaluatorKind::External);
    EXPECT_EQ(c.engine.capacity, 20);
    EXPECT_EQ(c.engine.init_ops_min, 2);
    EXPECT_EQ(c.engine.init_ops_max, 4);
    EXPECT_EQ(c.engine.seed, 99u);
    EXPECT_EQ(c.engine.weights.mu1, 1.0);
    EXPECT_EQ(c.engine.weights.mu3, 0.5);
    EXPECT_EQ(c.shape.num_classes, 3);
    EXPECT_EQ(c.surrogate.shape.num_classes, 3);
    EXPECT_EQ(c.dispatch.job_timeout_s, 60.0);
    ASSERT_EQ(c.pool.workers.size(), 1u);
    EXPECT_EQ(c.dispatch.eval_config["epochs"], 3);
    EXPECT_EQ(c.dispatch.eval_config["kd_weights"]["probe"], 0.3);
    EXPECT_EQ(c.dispatch.eval_config["kd_weights"]["vanilla_kd"], 0.5);
}

TEST(Config, UnknownKeysAreNamed) {
    EXPECT_NE(error_of(R"({"engnie": {}})").find("'config.engnie'"), std::string::npos);
    EXPECT_NE(error_of(R"({"engine": {"populaton": 5}})").find("'engine.populaton'"), std::string::npos);
    EXPECT_NE(error_of(R"({"dispatch": {"timeout": 5}})").find("'dispatch.timeout'"), std::string::npos);
    EXPECT_NE(error_of(R"({"fitness": {"mu4": 1}})").find("'fitness.mu4'"), std::string::npos);
}

TEST(Config, BadValuesAreRejectedWithTheirKey) {
    EXPECT_NE(error_of(R"({"engine": {"population": "ten"}})").find("engine.population"), std::string::npos);
    EXPECT_NE(error_of(R"({"engine": {"population": 1}})").find("engine."), std::string::npos);
    EXPECT_NE(error_of(R"({"engine": {"seed": -1}})").find("engine.seed"), std::string::npos);
    EXPECT_NE(error_of(R"({"engine": {"init_ops": [3]}})").find("engine.init_ops"), std::string::npos);
    EXPECT_NE(error_of(R"({"fitness": {"mu2": -1}})").find("fitness"), std::string::npos);
    EXPECT_NE(error_of(R"({"evaluator": "gpu"})").find("config.evaluator"), std::string::npos);
    EXPECT_NE(error_of(R"({"dispatch": {"workers": ["nohost"]}})"), "");
    EXPECT_NE(error_of(R"({"dispatch": {"retry_cap": 0}})"), "");
    EXPECT_NE(error_of(R"({"shape": {"vocab_size": 0}})").find("shape"), std::string::npos);
    EXPECT_NE(error_of(R"({"eval_config": 3})").find("eval_config"), std::string::npos);
}

TEST(Config, SyntaxErrorsReportAByteOffset) {
    try {
        parse_config("{\"engine\": {\"population\": 5,}}");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.position, 29u);
    }
}

TEST(Config, RoundTripsThroughItsOwnJson) {
    const RunConfig a = parse_config(R"({"engine": {"population": 30, "patience": 7}, "fitness": {"mu2": 3}})");
    const RunConfig b = config_from_json(json::parse(to_json(a).dump()));
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    EXPECT_EQ(effective_digest(a), effective_digest(b));
}

TEST(Config, EffectiveDigestTracksTrajectorySettingsOnly) {
    const RunConfig base = parse_config("{}");
    EXPECT_NE(effective_digest(base), effective_digest(parse_config(R"({"engine": {"seed": 2}})")));
    EXPECT_NE(effective_digest(base), effective_digest(parse_config(R"({"fitness": {"mu3": 1}})")));
    EXPECT_NE(effective_digest(base), effective_digest(parse_config(R"({"shape": {"num_classes": 4}})")));
    EXPECT_NE(effective_digest(base), effective_digest(parse_config(R"({"space": {"repeats_range": [3, 4]}})")));
    // Dispatch timing and worker-side settings do not change the trajectory.
    EXPECT_EQ(effective_digest(base), effective_digest(parse_config(R"({"dispatch": {"job_timeout_s": 5}})")));
    EXPECT_EQ(effective_digest(base), effective_digest(parse_config(R"({"eval_config": {"epochs": 1}})")));
}

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "rnas/engine.hpp"
#include "rnas/hash.hpp"
#include "scripted_evaluator.hpp"
#include "test_util.hpp"

namespace rnas {
namespace {

EngineConfig small_config(std::uint64_t seed = 3) {
    EngineConfig c;
    c.capacity = 20;
    c.init_ops_min = 2;
    c.init_ops_max = 10;
    c.patience = 1000;
    c.max_evaluations = 150;
    c.seed = seed;
    return c;
}

std::string history_digest(const std::vector<ScoredIndividual>& h) {
    Fnv1a d;
    for (const auto& ind : h) d.update(to_json(ind).dump());
    return to_hex(d.digest());
}

ScoredIndividual member(std::uint64_t id, double fitness) {
    ScoredIndividual m;
    m.id = id;
    m.fitness = fitness;
    m.scores = EvalScores{};
    return m;
}

TEST(EngineConfig, CheckNamesTheField) {
    EngineConfig c;
    c.tournament_size = 1;
    try {
        c.check();
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("tournament_size"), std::string::npos);
    }
    c = {};
    c.patience = 0;
    EXPECT_THROW(c.check(), std::invalid_argument);
    c = {};
    EXPECT_EQ(c.capacity, 100);
    EXPECT_EQ(c.tournament_size, 2);
    EXPECT_EQ(c.weights, (FitnessWeights{1, 1, 2}));
}

TEST(Tournament, PicksMaxAndMinWithAgeTieBreak) {
    Population pop(2);
    pop.insert(member(0, 5));
    pop.insert(member(1, 3));
    const auto r = tournament(pop, 2, 1);
    EXPECT_EQ(r.winner, 0u);
    EXPECT_EQ(r.loser, 1u);

    Population tie(2);
    tie.insert(member(7, 4));
    tie.insert(member(3, 4));
    const auto t = tournament(tie, 2, 9);
    EXPECT_EQ(t.winner, 3u);
    EXPECT_EQ(t.loser, 7u);
}

TEST(Tournament, SamplingIsUniform) {
    constexpr int kMembers = 10, kRounds = 10000, kSize = 2;
    Population pop(kMembers);
    for (int i = 0; i < kMembers; ++i) pop.insert(member(static_cast<std::uint64_t>(i), i));
    // Each tournament of size 2 draws two distinct members; the loser is the
    // lower-fitness one, so winner and loser together identify the sample.
    std::map<std::uint64_t, int> seen;
    for (int r = 0; r < kRounds; ++r) {
        const auto t = tournament(pop, kSize, derive_seed(5, {static_cast<std::uint64_t>(r)}));
        ASSERT_NE(t.winner, t.loser);
        ++seen[t.winner];
        ++seen[t.loser];
    }
    const double p = double(kSize) / kMembers;
    const double mean = kRounds * p;
    const double sigma = std::sqrt(kRounds * p * (1 - p));
    for (int i = 0; i < kMembers; ++i) {
        EXPECT_LE(std::abs(seen[static_cast<std::uint64_t>(i)] - mean), 3 * sigma) << "member " << i;
    }
}

TEST(Engine, InitialPopulationIsFullAndInSpace) {
    const SearchSpaceDef s;
    SurrogateEvaluator eval{SurrogateConfig{}};
    SearchEngine engine(s, small_config(), eval);
    engine.init_population();
    EXPECT_EQ(engine.population().size(), 20u);
    EXPECT_EQ(engine.history().size(), 20u);
    for (const auto& m : engine.population().members()) EXPECT_TRUE(contains(s, m.arch));
}

TEST(Engine, ZeroInitOpsGivesSimplest) {
    const SearchSpaceDef s;
    EngineConfig c = small_config();
    c.init_ops_min = c.init_ops_max = 0;
    SurrogateEvaluator eval{SurrogateConfig{}};
    SearchEngine engine(s, c, eval);
    engine.init_population();
    for (const auto& m : engine.population().members()) EXPECT_EQ(m.arch, simplest(s));
    // Identical candidates after the first come from the cache.
    EXPECT_EQ(eval.calls(), 1u);
}

TEST(Engine, FailedInitialEvaluationsAreRetried) {
    testing::ScriptedEvaluator eval([](const Architecture& a, std::uint64_t call) -> EvalOutcome {
        if (call % 3 == 0) return {std::nullopt, "scripted", "flaky"};
        return {surrogate_eval(a, {}), "scripted", {}};
    });
    SearchEngine engine(SearchSpaceDef{}, small_config(), eval);
    engine.init_population();
    EXPECT_EQ(engine.population().size(), 20u);
    for (const auto& m : engine.population().members()) EXPECT_FALSE(m.failed());
}

TEST(Engine, StepKeepsSizeAndTracksBest) {
    const SearchSpaceDef s;
    SurrogateEvaluator eval{SurrogateConfig{}};
    SearchEngine engine(s, small_config(), eval);
    engine.init_population();
    double best = engine.best()->fitness;
    for (int g = 0; g < 100; ++g) {
        const auto r = engine.step();
        ASSERT_EQ(engine.population().size(), 20u);
        ASSERT_GE(r.best_fitness, best);
        ASSERT_EQ(r.improved, r.best_fitness > best);
        best = r.best_fitness;
        ASSERT_TRUE(contains(s, r.offspring.arch));
        ASSERT_NE(r.parent_id, r.offspring.id);
    }
}

TEST(Engine, OffspringStaysNearItsParent) {
    const SearchSpaceDef s;
    SurrogateEvaluator eval{SurrogateConfig{}};
    SearchEngine engine(s, small_config(), eval);
    const auto result = engine.run();
    std::map<std::uint64_t, const ScoredIndividual*> by_id;
    for (const auto& h : result.history) by_id[h.id] = &h;
    for (const auto& h : result.history) {
        if (!h.parent_id) continue;
        const int d = distance(by_id.at(*h.parent_id)->arch, h.arch);
        EXPECT_GT(d, 0);
        EXPECT_LT(d, step_tolerance(s.n));
    }
}

TEST(Engine, FailedOffspringGetSentinelAndLoserStillLeaves) {
    testing::ScriptedEvaluator eval([](const Architecture& a, std::uint64_t call) -> EvalOutcome {
        if (call >= 20 && call % 2 == 0) return {std::nullopt, "scripted", "boom"};
        return {surrogate_eval(a, {}), "scripted", {}};
    });
    SearchEngine engine(SearchSpaceDef{}, small_config(), eval);
    const auto result = engine.run();
    int failures = 0;
    for (const auto& h : result.history) {
        if (h.failed()) {
            ++failures;
            EXPECT_EQ(h.fitness, kFailedFitness);
        }
    }
    EXPECT_GT(failures, 0);
    EXPECT_EQ(engine.population().size(), 20u);
    EXPECT_FALSE(result.best.failed());
}

TEST(Engine, BudgetZeroReturnsBestInitialMember) {
    EngineConfig c = small_config();
    c.max_evaluations = 0;
    SurrogateEvaluator eval{SurrogateConfig{}};
    SearchEngine engine(SearchSpaceDef{}, c, eval);
    const auto result = engine.run();
    EXPECT_EQ(result.reason, StopReason::BudgetExhausted);
    EXPECT_EQ(result.history.size(), 20u);
    EXPECT_EQ(result.best.id, engine.population().best().id);
}

TEST(Engine, PatienceStopsTheRun) {
    EngineConfig c = small_config();
    c.patience = 5;
    c.max_evaluations = 100000;
    SurrogateEvaluator eval{SurrogateConfig{}};
    const auto result = run_search(SearchSpaceDef{}, c, eval);
    EXPECT_EQ(result.reason, StopReason::Converged);
    ASSERT_GE(result.best_trace.size(), 6u);
    const auto n = result.best_trace.size();
    EXPECT_EQ(result.best_trace[n - 1], result.best_trace[n - 6]);
}

TEST(Engine, DeterministicForAGivenSeed) {
    SurrogateEvaluator e1{SurrogateConfig{}}, e2{SurrogateConfig{}}, e3{SurrogateConfig{}};
    const auto a = run_search(SearchSpaceDef{}, small_config(11), e1);
    const auto b = run_search(SearchSpaceDef{}, small_config(11), e2);
    const auto c = run_search(SearchSpaceDef{}, small_config(12), e3);
    EXPECT_EQ(history_digest(a.history), history_digest(b.history));
    EXPECT_NE(history_digest(a.history), history_digest(c.history));
}

TEST(Engine, FullSizeTournamentAlwaysBreedsTheMaximum) {
    EngineConfig c = small_config();
    c.tournament_size = c.capacity;
    SurrogateEvaluator eval{SurrogateConfig{}};
    SearchEngine engine(SearchSpaceDef{}, c, eval);
    engine.init_population();
    for (int g = 0; g < 50; ++g) {
        const auto max_id = engine.population().best().id;
        EXPECT_EQ(engine.step().parent_id, max_id);
    }
}

TEST(Engine, AsynchronousModeKeepsInvariants) {
    // LIFO completion reorders results relative to dispatch.
    testing::ScriptedEvaluator eval(
        [](const Architecture& a, std::uint64_t) -> EvalOutcome { return {surrogate_eval(a, {}), "s", {}}; }, true);
    EngineConfig c = small_config();
    c.max_in_flight = 6;
    SearchEngine engine(SearchSpaceDef{}, c, eval);
    std::size_t min_size = 1000, max_size = 0;
    RunControl control;
    control.on_generation = [&](const GenerationReport&) {
        min_size = std::min(min_size, engine.population().size());
        max_size = std::max(max_size, engine.population().size());
    };
    const auto result = engine.run(control);
    EXPECT_EQ(min_size, 20u);
    EXPECT_EQ(max_size, 20u);
    EXPECT_EQ(result.history.size(), 20u + 150u);
    for (std::size_t i = 1; i < result.best_trace.size(); ++i) EXPECT_GE(result.best_trace[i], result.best_trace[i - 1]);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
    const SearchSpaceDef s;
    SurrogateEvaluator full_eval{SurrogateConfig{}};
    const auto full = run_search(s, small_config(21), full_eval);

    SurrogateEvaluator e1{SurrogateConfig{}};
    SearchEngine first(s, small_config(21), e1);
    RunControl halt;
    halt.halt_after_generations = 60;
    EXPECT_EQ(first.run(halt).reason, StopReason::Halted);
    const std::string cp_text = write_checkpoint(first.checkpoint());
    // Records appended after the snapshot are dropped on restore.
    auto history = first.history();
    history.push_back(history.back());

    SurrogateEvaluator e2{SurrogateConfig{}};
    SearchEngine second(s, small_config(21), e2);
    second.restore(read_checkpoint(cp_text), history);
    const auto resumed = second.run();
    EXPECT_EQ(history_digest(resumed.history), history_digest(full.history));
    EXPECT_EQ(resumed.best.id, full.best.id);
    EXPECT_EQ(resumed.best_trace, full.best_trace);
}

TEST(Checkpoint, CorruptionIsDetected) {
    SurrogateEvaluator eval{SurrogateConfig{}};
    SearchEngine engine(SearchSpaceDef{}, small_config(), eval);
    engine.init_population();
    std::string text = write_checkpoint(engine.checkpoint());
    EXPECT_NO_THROW(read_checkpoint(text));
    const auto pos = text.find("\"repeats\":", text.find('\n'));
    text[pos + 10] = text[pos + 10] == '3' ? '4' : '3';
    EXPECT_THROW(read_checkpoint(text), CheckpointError);
    EXPECT_THROW(read_checkpoint("not a checkpoint"), CheckpointError);
}

TEST(Checkpoint, MismatchedConfigIsRefused) {
    SurrogateEvaluator eval{SurrogateConfig{}};
    SearchEngine engine(SearchSpaceDef{}, small_config(), eval);
    engine.init_population();
    const auto cp = engine.checkpoint();
    EngineConfig other = small_config();
    other.capacity = 30;
    SearchEngine different(SearchSpaceDef{}, other, eval);
    EXPECT_THROW(different.restore(cp, engine.history()), CheckpointError);
    SearchEngine same(SearchSpaceDef{}, small_config(), eval);
    auto short_history = engine.history();
    short_history.pop_back();
    EXPECT_THROW(same.restore(cp, short_history), CheckpointError);
}

TEST(BestTrace, RecomputedFromHistory) {
    std::vector<ScoredIndividual> h{member(0, 1), member(1, 3), member(2, 2), member(3, 2.5), member(4, 7)};
    EXPECT_EQ(best_fitness_trace(h, 3), (std::vector<double>{3, 3, 7}));
}

}  // namespace
}  // namespace rnas

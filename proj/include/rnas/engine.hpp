#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnas/evolution.hpp"
#include "rnas/fitness.hpp"
#include "rnas/search_space.hpp"

namespace rnas {

struct EngineConfig {
    int capacity = 100;
    int tournament_size = 2;
    int init_ops_min = 5;
    int init_ops_max = 30;
    int patience = 50;                    // generations without best-fitness improvement
    std::int64_t max_evaluations = 5000;  // offspring evaluations after initialization
    std::uint64_t seed = 1;
    FitnessWeights weights;
    int max_in_flight = 1;   // 1 = synchronous, deterministic replay
    int init_retry_cap = 3;  // evaluation retries before an initial individual is regenerated

    /// Throws std::invalid_argument naming the offending field.
    void check() const;
    friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

nlohmann::ordered_json to_json(const EngineConfig& cfg);

/// Fixed-capacity member store ordered by id (older individuals first).
class Population {
public:
    explicit Population(std::size_t capacity = 0) : capacity_(capacity) {}

    std::size_t size() const { return members_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return members_.empty(); }
    const std::vector<ScoredIndividual>& members() const { return members_; }

    const ScoredIndividual* find(std::uint64_t id) const;
    void insert(ScoredIndividual ind);
    bool erase(std::uint64_t id);
    /// Highest fitness, ties to the lower id.
    const ScoredIndividual& best() const;

private:
    std::size_t capacity_;
    std::vector<ScoredIndividual> members_;
};

struct TournamentResult {
    std::uint64_t winner = 0;
    std::uint64_t loser = 0;
};

/// Samples `size` distinct members uniformly. Winner is the fittest, loser
/// the least fit; ties go to the older (lower id) individual in both cases,
/// so the younger one loses.
TournamentResult tournament(const Population& pop, int size, std::uint64_t seed);

struct GenerationReport {
    std::int64_t generation = 0;
    ScoredIndividual offspring;
    std::uint64_t parent_id = 0;
    std::uint64_t eliminated_id = 0;
    std::string op;
    double best_fitness = kFailedFitness;
    bool improved = false;
};

enum class StopReason { Converged, BudgetExhausted, Halted };
std::string_view to_string(StopReason r);

struct SearchResult {
    ScoredIndividual best;
    std::vector<ScoredIndividual> history;
    std::vector<double> best_trace;  // best-so-far after init and after each generation
    StopReason reason = StopReason::BudgetExhausted;
    std::int64_t generations = 0;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Resumable engine state. History records live in a separate append-only
/// file; `history_offset` says how many of them belong to this snapshot.
struct Checkpoint {
    std::string config_digest;
    std::uint64_t seed = 0;
    std::int64_t generation = 0;
    std::int64_t dispatched = 0;
    std::uint64_t next_id = 0;
    std::int64_t stale_generations = 0;
    std::vector<ScoredIndividual> population;
    std::optional<ScoredIndividual> best;
    std::uint64_t history_offset = 0;
};

/// Header line (with a digest over the body) followed by one record per line.
std::string write_checkpoint(const Checkpoint& cp);
/// Throws CheckpointError on a digest mismatch or malformed content.
Checkpoint read_checkpoint(std::string_view text);

/// Digest of the engine-relevant configuration (space, engine, weights).
std::string config_digest(const SearchSpaceDef& space, const EngineConfig& cfg);

/// Best-so-far sequence implied by a history whose first `init_count`
/// records are the initial population.
std::vector<double> best_fitness_trace(const std::vector<ScoredIndividual>& history, std::size_t init_count);

struct RunControl {
    /// Stop dispatching once this many generations have completed.
    std::optional<std::int64_t> halt_after_generations;
    std::function<void(const ScoredIndividual&)> on_evaluated;
    std::function<void(const GenerationReport&)> on_generation;
};

/// Steady-state tournament evolution: every generation copies-and-mutates a
/// tournament winner, inserts the evaluated offspring and removes the
/// tournament loser. Up to `max_in_flight` offspring may be under
/// evaluation; insertions happen in completion order.
class SearchEngine {
public:
    SearchEngine(SearchSpaceDef space, EngineConfig config, Evaluator& evaluator, std::string digest = {});

    void init_population(const RunControl& control = {});
    /// One synchronous generation. Requires an initialized population and no
    /// evaluations in flight.
    GenerationReport step(const RunControl& control = {});
    SearchResult run(const RunControl& control = {});

    Checkpoint checkpoint() const;
    /// Restores a snapshot. `history` may hold more records than the snapshot
    /// covers (written after it); the extra records are dropped.
    void restore(const Checkpoint& cp, std::vector<ScoredIndividual> history);

    bool initialized() const { return initialized_; }
    const Population& population() const { return population_; }
    const std::vector<ScoredIndividual>& history() const { return history_; }
    const std::vector<double>& best_trace() const { return best_trace_; }
    const std::optional<ScoredIndividual>& best() const { return best_; }
    std::int64_t generation() const { return generation_; }
    const FitnessCache& cache() const { return cache_; }
    const std::string& digest() const { return digest_; }

private:
    struct Pending {
        Architecture arch;
        std::uint64_t parent_id = 0;
        std::uint64_t loser_id = 0;
        std::string op;
    };

    bool may_dispatch(const RunControl& control) const;
    std::optional<GenerationReport> dispatch_offspring(const RunControl& control);
    GenerationReport complete_offspring(const Pending& p, const EvalOutcome& outcome, const RunControl& control);
    void record(const ScoredIndividual& ind, const RunControl& control);
    Architecture initial_candidate(std::uint64_t index, int regeneration) const;
    std::optional<EvalOutcome> lookup(const Architecture& arch) const;

    SearchSpaceDef space_;
    EngineConfig config_;
    Evaluator& evaluator_;
    std::string digest_;
    FitnessCache cache_;

    Population population_;
    std::vector<ScoredIndividual> history_;
    std::vector<double> best_trace_;
    std::optional<ScoredIndividual> best_;
    bool initialized_ = false;
    std::int64_t generation_ = 0;
    std::int64_t dispatched_ = 0;
    std::uint64_t next_id_ = 0;
    std::int64_t stale_ = 0;
    std::uint64_t next_ticket_ = 0;
    std::map<std::uint64_t, Pending> pending_;
};

/// Convenience wrapper: initialize and run to completion.
SearchResult run_search(const SearchSpaceDef& space, const EngineConfig& config, Evaluator& evaluator);

}  // namespace rnas

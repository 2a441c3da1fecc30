#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "rnas/arch.hpp"

namespace rnas {

struct FitnessWeights {
    double mu1 = 1.0;  // accuracy
    double mu2 = 1.0;  // robustness
    double mu3 = 2.0;  // parameters, in millions

    friend bool operator==(const FitnessWeights&, const FitnessWeights&) = default;
};

struct EvalScores {
    double accuracy_pct = 0.0;
    double robustness_pct = 0.0;
    std::uint64_t param_count = 0;

    friend bool operator==(const EvalScores&, const EvalScores&) = default;
};

struct FitnessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// mu1 * accuracy% + mu2 * robustness% - mu3 * params / 1e6.
double aggregate(const EvalScores& scores, const FitnessWeights& weights);

/// Fitness assigned to candidates whose evaluation failed.
inline constexpr double kFailedFitness = -std::numeric_limits<double>::infinity();

struct ScoredIndividual {
    std::uint64_t id = 0;
    Architecture arch;
    std::optional<EvalScores> scores;  // empty when evaluation failed
    double fitness = kFailedFitness;
    std::int64_t birth_generation = 0;
    std::string eval_source;
    std::optional<std::uint64_t> parent_id;

    bool failed() const { return !scores.has_value(); }
};

nlohmann::ordered_json to_json(const ScoredIndividual& ind);
ScoredIndividual individual_from_json(const nlohmann::json& j);

// Linear coefficients over architecture features. The squared distance of
// the edge count from `edge_peak` gives the landscape a mid-range optimum.
struct LandscapeTerms {
    double base = 0.0;
    double active_nodes = 0.0;
    double edges = 0.0;
    double edge_peak = 6.0;
    double edge_deviation_sq = 0.0;
    double repeats = 0.0;
    double width_step = 0.0;  // per doubling of hidden width above 128
    std::array<double, 4> per_layer{};  // per active node, indexed by LayerType

    friend bool operator==(const LandscapeTerms&, const LandscapeTerms&) = default;
};

/// Deterministic synthetic landscape for GPU-free runs. The defaults reward
/// more active nodes, deeper stacks and mid-range connectivity for
/// robustness, and penalize attention-heavy blocks for accuracy. They are
/// test fixtures, not measurements.
struct SurrogateConfig {
    LandscapeTerms accuracy{78.0, 1.2, 0.0, 6.0, -0.05, 0.5, 0.8, {0.3, 0.4, -1.5, 0.2}};
    LandscapeTerms robustness{25.0, 5.0, 0.0, 6.0, -0.6, 1.5, 1.0, {0.0, 1.0, 1.5, 0.5}};
    std::uint64_t noise_seed = 0;
    double noise_amplitude = 0.05;  // percentage points, uniform in [-a, a]
    ModelShapeConfig shape;

    friend bool operator==(const SurrogateConfig&, const SurrogateConfig&) = default;
};

nlohmann::ordered_json to_json(const SurrogateConfig& cfg);
SurrogateConfig surrogate_from_json(const nlohmann::json& j);

struct ArchFeatures {
    int active_nodes = 0;
    int edges = 0;
    int repeats = 0;
    double width_step = 0.0;
    std::array<int, 4> per_layer{};
};

ArchFeatures features(const Architecture& arch);
double landscape_value(const LandscapeTerms& terms, const ArchFeatures& f);

EvalScores surrogate_eval(const Architecture& arch, const SurrogateConfig& cfg);

struct EvalOutcome {
    std::optional<EvalScores> scores;
    std::string source;  // "surrogate" or "worker:<id>"
    std::string error;

    bool ok() const { return scores.has_value(); }
};

/// Evaluation backend. Candidates are submitted under caller-chosen tickets
/// and come back through wait() in completion order.
class Evaluator {
public:
    struct Completion {
        std::uint64_t ticket = 0;
        EvalOutcome outcome;
    };

    virtual ~Evaluator() = default;
    virtual void submit(std::uint64_t ticket, const Architecture& arch) = 0;
    /// Blocks until a submitted ticket completes.
    virtual Completion wait() = 0;
    virtual std::size_t in_flight() const = 0;
};

/// Submit-and-wait convenience for a single candidate; requires an idle evaluator.
EvalOutcome evaluate_now(Evaluator& evaluator, const Architecture& arch);

class SurrogateEvaluator final : public Evaluator {
public:
    explicit SurrogateEvaluator(SurrogateConfig cfg) : cfg_(std::move(cfg)) {}

    void submit(std::uint64_t ticket, const Architecture& arch) override;
    Completion wait() override;
    std::size_t in_flight() const override { return done_.size(); }

    std::uint64_t calls() const { return calls_; }

private:
    SurrogateConfig cfg_;
    std::deque<Completion> done_;
    std::uint64_t calls_ = 0;
};

/// Thread-safe score cache keyed by canonical architecture digest. The first
/// stored result for a key wins.
class FitnessCache {
public:
    struct Entry {
        EvalScores scores;
        std::string source;
    };

    std::optional<Entry> find(const ArchDigest& key) const;
    void store(const ArchDigest& key, Entry entry);
    std::size_t size() const;
    std::uint64_t hits() const;
    void clear();

private:
    mutable std::mutex mu_;
    std::unordered_map<ArchDigest, Entry> entries_;
    mutable std::uint64_t hits_ = 0;
};

/// Cache lookup, falling back to the evaluator on a miss. Failed
/// evaluations are returned but never stored.
EvalOutcome cached_eval(const Architecture& arch, Evaluator& evaluator, FitnessCache& cache);

}  // namespace rnas

#include "rnas/engine.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include <spdlog/spdlog.h>

#include "rnas/hash.hpp"

namespace rnas {

namespace {

// Seed streams; each draw is a pure function of (run seed, stream, counters).
enum : std::uint64_t {
    kInitOpsStream = 1,
    kInitEvolveStream = 2,
    kTournamentStream = 3,
    kEvolveStream = 4,
    kCullStream = 5,
};

constexpr int kMaxInitRegenerations = 20;
constexpr std::string_view kCheckpointType = "rnas-checkpoint";
constexpr int kCheckpointVersion = 1;

bool fitter(const ScoredIndividual& a, const ScoredIndividual& b) {
    return a.fitness > b.fitness || (a.fitness == b.fitness && a.id < b.id);
}

}  // namespace

void EngineConfig::check() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("engine." + what); };
    if (capacity < 2) fail("population: must be at least 2");
    if (tournament_size < 2 || tournament_size > capacity) fail("tournament_size: must lie in {2..population}");
    if (init_ops_min < 0 || init_ops_max < init_ops_min) fail("init_ops: need 0 <= min <= max");
    if (patience < 1) fail("patience: must be at least 1");
    if (max_evaluations < 0) fail("max_evaluations: must be non-negative");
    if (max_in_flight < 1) fail("max_in_flight: must be at least 1");
    if (init_retry_cap < 0) fail("init_retry_cap: must be non-negative");
}

nlohmann::ordered_json to_json(const EngineConfig& c) {
    nlohmann::ordered_json j;
    j["population"] = c.capacity;
    j["tournament_size"] = c.tournament_size;
    j["init_ops"] = {c.init_ops_min, c.init_ops_max};
    j["patience"] = c.patience;
    j["max_evaluations"] = c.max_evaluations;
    j["seed"] = c.seed;
    j["weights"] = {{"mu1", c.weights.mu1}, {"mu2", c.weights.mu2}, {"mu3", c.weights.mu3}};
    j["max_in_flight"] = c.max_in_flight;
    j["init_retry_cap"] = c.init_retry_cap;
    return j;
}

const ScoredIndividual* Population::find(std::uint64_t id) const {
    auto it = std::lower_bound(members_.begin(), members_.end(), id,
                               [](const ScoredIndividual& m, std::uint64_t key) { return m.id < key; });
    return it != members_.end() && it->id == id ? &*it : nullptr;
}

void Population::insert(ScoredIndividual ind) {
    auto it = std::lower_bound(members_.begin(), members_.end(), ind.id,
                               [](const ScoredIndividual& m, std::uint64_t key) { return m.id < key; });
    if (it != members_.end() && it->id == ind.id) throw std::logic_error("population: duplicate member id");
    members_.insert(it, std::move(ind));
}

bool Population::erase(std::uint64_t id) {
    auto it = std::find_if(members_.begin(), members_.end(), [id](const ScoredIndividual& m) { return m.id == id; });
    if (it == members_.end()) return false;
    members_.erase(it);
    return true;
}

const ScoredIndividual& Population::best() const {
    if (members_.empty()) throw std::logic_error("population: best() of an empty population");
    return *std::min_element(members_.begin(), members_.end(), fitter);
}

TournamentResult tournament(const Population& pop, int size, std::uint64_t seed) {
    if (size < 1 || static_cast<std::size_t>(size) > pop.size()) {
        throw std::invalid_argument("tournament: size must lie in {1..population size}");
    }
    Rng rng(seed);
    std::vector<std::size_t> index(pop.size());
    for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
    for (std::size_t k = 0; k < static_cast<std::size_t>(size); ++k) {
        std::swap(index[k], index[k + uniform_index(rng, index.size() - k)]);
    }
    const auto& m = pop.members();
    const ScoredIndividual* winner = &m[index[0]];
    const ScoredIndividual* loser = &m[index[0]];
    for (std::size_t k = 1; k < static_cast<std::size_t>(size); ++k) {
        const ScoredIndividual& c = m[index[k]];
        if (fitter(c, *winner)) winner = &c;
        if (fitter(*loser, c)) loser = &c;
    }
    return {winner->id, loser->id};
}

std::string_view to_string(StopReason r) {
    switch (r) {
        case StopReason::Converged:
            return "converged";
        case StopReason::BudgetExhausted:
            return "budget_exhausted";
        case StopReason::Halted:
            return "halted";
    }
    return "?";
}

std::string write_checkpoint(const Checkpoint& cp) {
    std::string body;
    for (const auto& m : cp.population) {
        nlohmann::ordered_json j;
        j["record"] = "member";
        j["individual"] = to_json(m);
        body += j.dump() + "\n";
    }
    if (cp.best) {
        nlohmann::ordered_json j;
        j["record"] = "best";
        j["individual"] = to_json(*cp.best);
        body += j.dump() + "\n";
    }
    nlohmann::ordered_json header;
    header["type"] = kCheckpointType;
    header["version"] = kCheckpointVersion;
    header["config_digest"] = cp.config_digest;
    header["seed"] = cp.seed;
    header["generation"] = cp.generation;
    header["dispatched"] = cp.dispatched;
    header["next_id"] = cp.next_id;
    header["stale_generations"] = cp.stale_generations;
    header["history_offset"] = cp.history_offset;
    header["members"] = cp.population.size();
    header["body_digest"] = to_hex(fnv1a(body));
    return header.dump() + "\n" + body;
}

Checkpoint read_checkpoint(std::string_view text) {
    const auto eol = text.find('\n');
    if (eol == std::string_view::npos) throw CheckpointError("checkpoint: missing header line");
    const std::string_view body = text.substr(eol + 1);
    Checkpoint cp;
    try {
        const auto header = nlohmann::json::parse(text.substr(0, eol));
        if (header.at("type") != kCheckpointType || header.at("version") != kCheckpointVersion) {
            throw CheckpointError("checkpoint: unsupported file type or version");
        }
        if (header.at("body_digest").get<std::string>() != to_hex(fnv1a(body))) {
            throw CheckpointError("checkpoint: body digest mismatch (file is corrupt or truncated)");
        }
        cp.config_digest = header.at("config_digest").get<std::string>();
        cp.seed = header.at("seed").get<std::uint64_t>();
        cp.generation = header.at("generation").get<std::int64_t>();
        cp.dispatched = header.at("dispatched").get<std::int64_t>();
        cp.next_id = header.at("next_id").get<std::uint64_t>();
        cp.stale_generations = header.at("stale_generations").get<std::int64_t>();
        cp.history_offset = header.at("history_offset").get<std::uint64_t>();
        const auto members = header.at("members").get<std::size_t>();

        std::istringstream lines{std::string(body)};
        std::string line;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            const auto rec = nlohmann::json::parse(line);
            const auto kind = rec.at("record").get<std::string>();
            if (kind == "member") {
                cp.population.push_back(individual_from_json(rec.at("individual")));
            } else if (kind == "best") {
                cp.best = individual_from_json(rec.at("individual"));
            } else {
                throw CheckpointError("checkpoint: unknown record kind '" + kind + "'");
            }
        }
        if (cp.population.size() != members) throw CheckpointError("checkpoint: member count mismatch");
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: malformed content: ") + e.what());
    } catch (const ParseError& e) {
        throw CheckpointError(std::string("checkpoint: malformed record: ") + e.what());
    }
    return cp;
}

std::string config_digest(const SearchSpaceDef& space, const EngineConfig& cfg) {
    nlohmann::ordered_json j;
    j["space"] = to_json(space);
    j["engine"] = to_json(cfg);
    return to_hex(fnv1a(j.dump()));
}

std::vector<double> best_fitness_trace(const std::vector<ScoredIndividual>& history, std::size_t init_count) {
    std::vector<double> trace;
    if (history.size() < init_count || init_count == 0) return trace;
    const ScoredIndividual* best = &history.front();
    for (std::size_t i = 1; i < init_count; ++i) {
        if (fitter(history[i], *best)) best = &history[i];
    }
    double value = best->fitness;
    trace.push_back(value);
    for (std::size_t i = init_count; i < history.size(); ++i) {
        value = std::max(value, history[i].fitness);
        trace.push_back(value);
    }
    return trace;
}

SearchEngine::SearchEngine(SearchSpaceDef space, EngineConfig config, Evaluator& evaluator, std::string digest)
    : space_(std::move(space)), config_(config), evaluator_(evaluator), digest_(std::move(digest)),
      population_(static_cast<std::size_t>(config.capacity)) {
    space_.check();
    config_.check();
    if (digest_.empty()) digest_ = config_digest(space_, config_);
}

std::optional<EvalOutcome> SearchEngine::lookup(const Architecture& arch) const {
    if (auto hit = cache_.find(canonical_hash(arch))) return EvalOutcome{hit->scores, hit->source, {}};
    return std::nullopt;
}

Architecture SearchEngine::initial_candidate(std::uint64_t index, int regeneration) const {
    const auto regen = static_cast<std::uint64_t>(regeneration);
    Rng rng(derive_seed(config_.seed, {kInitOpsStream, index, regen}));
    const auto span = static_cast<std::uint64_t>(config_.init_ops_max - config_.init_ops_min + 1);
    const auto ops = static_cast<std::uint64_t>(config_.init_ops_min) + uniform_index(rng, span);
    Architecture arch = simplest(space_);
    for (std::uint64_t k = 0; k < ops; ++k) {
        arch = evolve(arch, space_, derive_seed(config_.seed, {kInitEvolveStream, index, regen, k})).arch;
    }
    return arch;
}

void SearchEngine::record(const ScoredIndividual& ind, const RunControl& control) {
    history_.push_back(ind);
    if (control.on_evaluated) control.on_evaluated(ind);
}

void SearchEngine::init_population(const RunControl& control) {
    if (initialized_) throw std::logic_error("init_population: already initialized");
    struct Slot {
        Architecture arch;
        int regeneration = 0;
        int failures = 0;
    };
    std::vector<Slot> slots;
    for (int i = 0; i < config_.capacity; ++i) slots.push_back({initial_candidate(static_cast<std::uint64_t>(i), 0)});

    std::deque<std::size_t> todo;
    for (std::size_t i = 0; i < slots.size(); ++i) todo.push_back(i);
    std::map<std::uint64_t, std::size_t> in_flight;

    auto settle = [&](std::size_t idx, const EvalOutcome& outcome) {
        Slot& slot = slots[idx];
        if (!outcome.ok()) {
            spdlog::warn("initial individual {} failed evaluation: {}", idx, outcome.error);
            if (++slot.failures > config_.init_retry_cap) {
                if (++slot.regeneration > kMaxInitRegenerations) {
                    throw std::runtime_error("init_population: evaluations keep failing: " + outcome.error);
                }
                slot.failures = 0;
                slot.arch = initial_candidate(idx, slot.regeneration);
            }
            todo.push_back(idx);
            return;
        }
        cache_.store(canonical_hash(slot.arch), {*outcome.scores, outcome.source});
        ScoredIndividual ind;
        ind.id = next_id_++;
        ind.arch = slot.arch;
        ind.scores = outcome.scores;
        ind.fitness = aggregate(*outcome.scores, config_.weights);
        ind.birth_generation = 0;
        ind.eval_source = outcome.source;
        population_.insert(ind);
        record(ind, control);
    };

    while (!todo.empty() || !in_flight.empty()) {
        while (!todo.empty() && in_flight.size() < static_cast<std::size_t>(config_.max_in_flight)) {
            const std::size_t idx = todo.front();
            todo.pop_front();
            if (auto hit = lookup(slots[idx].arch)) {
                settle(idx, *hit);
                continue;
            }
            const std::uint64_t ticket = next_ticket_++;
            in_flight[ticket] = idx;
            evaluator_.submit(ticket, slots[idx].arch);
        }
        if (in_flight.empty()) continue;
        auto done = evaluator_.wait();
        auto it = in_flight.find(done.ticket);
        if (it == in_flight.end()) throw std::logic_error("init_population: completion for an unknown ticket");
        const std::size_t idx = it->second;
        in_flight.erase(it);
        settle(idx, done.outcome);
    }

    best_ = population_.best();
    best_trace_ = {best_->fitness};
    stale_ = 0;
    initialized_ = true;
}

bool SearchEngine::may_dispatch(const RunControl& control) const {
    if (dispatched_ >= config_.max_evaluations || stale_ >= config_.patience) return false;
    return !(control.halt_after_generations && dispatched_ >= *control.halt_after_generations);
}

std::optional<GenerationReport> SearchEngine::dispatch_offspring(const RunControl& control) {
    const auto counter = static_cast<std::uint64_t>(dispatched_);
    const TournamentResult t =
        tournament(population_, config_.tournament_size, derive_seed(config_.seed, {kTournamentStream, counter}));
    const ScoredIndividual* parent = population_.find(t.winner);
    EvolveResult child = evolve(parent->arch, space_, derive_seed(config_.seed, {kEvolveStream, counter}));
    ++dispatched_;

    Pending p{std::move(child.arch), t.winner, t.loser, child.op.describe() + ": " + child.change};
    if (auto hit = lookup(p.arch)) return complete_offspring(p, *hit, control);
    const std::uint64_t ticket = next_ticket_++;
    evaluator_.submit(ticket, p.arch);
    pending_.emplace(ticket, std::move(p));
    return std::nullopt;
}

GenerationReport SearchEngine::complete_offspring(const Pending& p, const EvalOutcome& outcome,
                                                  const RunControl& control) {
    ScoredIndividual ind;
    ind.id = next_id_++;
    ind.arch = p.arch;
    ind.birth_generation = generation_ + 1;
    ind.eval_source = outcome.source;
    ind.parent_id = p.parent_id;
    if (outcome.ok()) {
        ind.scores = outcome.scores;
        ind.fitness = aggregate(*outcome.scores, config_.weights);
        cache_.store(canonical_hash(p.arch), {*outcome.scores, outcome.source});
    } else {
        spdlog::warn("offspring {} failed evaluation: {}", ind.id, outcome.error);
    }
    ++generation_;

    GenerationReport report;
    report.generation = generation_;
    report.parent_id = p.parent_id;
    report.op = p.op;

    population_.insert(ind);
    std::uint64_t eliminated = p.loser_id;
    if (!population_.find(eliminated)) {
        // The recorded loser was already removed by an earlier completion.
        eliminated = tournament(population_, config_.tournament_size,
                                derive_seed(config_.seed, {kCullStream, static_cast<std::uint64_t>(generation_)}))
                         .loser;
    }
    population_.erase(eliminated);
    report.eliminated_id = eliminated;

    record(ind, control);
    report.improved = ind.fitness > best_->fitness;
    if (report.improved) {
        best_ = ind;
        stale_ = 0;
    } else {
        ++stale_;
    }
    best_trace_.push_back(best_->fitness);
    report.best_fitness = best_->fitness;
    report.offspring = std::move(ind);
    if (control.on_generation) control.on_generation(report);
    return report;
}

GenerationReport SearchEngine::step(const RunControl& control) {
    if (!initialized_) throw std::logic_error("step: population not initialized");
    if (!pending_.empty()) throw std::logic_error("step: evaluations already in flight");
    if (auto done = dispatch_offspring(control)) return *done;
    auto c = evaluator_.wait();
    auto it = pending_.find(c.ticket);
    if (it == pending_.end()) throw std::logic_error("step: completion for an unknown ticket");
    Pending p = std::move(it->second);
    pending_.erase(it);
    return complete_offspring(p, c.outcome, control);
}

SearchResult SearchEngine::run(const RunControl& control) {
    if (!initialized_) init_population(control);
    while (true) {
        while (pending_.size() < static_cast<std::size_t>(config_.max_in_flight) && may_dispatch(control)) {
            dispatch_offspring(control);
        }
        if (pending_.empty()) break;
        auto c = evaluator_.wait();
        auto it = pending_.find(c.ticket);
        if (it == pending_.end()) throw std::logic_error("run: completion for an unknown ticket");
        Pending p = std::move(it->second);
        pending_.erase(it);
        complete_offspring(p, c.outcome, control);
    }

    SearchResult result;
    result.best = *best_;
    result.history = history_;
    result.best_trace = best_trace_;
    result.generations = generation_;
    if (stale_ >= config_.patience) {
        result.reason = StopReason::Converged;
    } else if (dispatched_ >= config_.max_evaluations) {
        result.reason = StopReason::BudgetExhausted;
    } else {
        result.reason = StopReason::Halted;
    }
    return result;
}

Checkpoint SearchEngine::checkpoint() const {
    if (!initialized_) throw std::logic_error("checkpoint: population not initialized");
    Checkpoint cp;
    cp.config_digest = digest_;
    cp.seed = config_.seed;
    cp.generation = generation_;
    cp.dispatched = dispatched_ - static_cast<std::int64_t>(pending_.size());
    cp.next_id = next_id_;
    cp.stale_generations = stale_;
    cp.population = population_.members();
    cp.best = best_;
    cp.history_offset = history_.size();
    return cp;
}

void SearchEngine::restore(const Checkpoint& cp, std::vector<ScoredIndividual> history) {
    if (cp.config_digest != digest_) {
        throw CheckpointError("checkpoint was written for a different configuration (digest " + cp.config_digest +
                              ", current " + digest_ + ")");
    }
    if (cp.seed != config_.seed) throw CheckpointError("checkpoint seed differs from the configured seed");
    if (history.size() < cp.history_offset) {
        throw CheckpointError("history holds " + std::to_string(history.size()) + " records, checkpoint expects " +
                              std::to_string(cp.history_offset));
    }
    if (cp.population.size() != static_cast<std::size_t>(config_.capacity) || !cp.best) {
        throw CheckpointError("checkpoint population does not match the configured capacity");
    }
    history.resize(cp.history_offset);

    cache_.clear();
    for (const auto& h : history) {
        if (h.scores) cache_.store(canonical_hash(h.arch), {*h.scores, h.eval_source});
    }
    population_ = Population(static_cast<std::size_t>(config_.capacity));
    for (const auto& m : cp.population) population_.insert(m);
    history_ = std::move(history);
    best_trace_ = best_fitness_trace(history_, static_cast<std::size_t>(config_.capacity));
    best_ = cp.best;
    generation_ = cp.generation;
    dispatched_ = cp.dispatched;
    next_id_ = cp.next_id;
    stale_ = cp.stale_generations;
    pending_.clear();
    initialized_ = true;
}

SearchResult run_search(const SearchSpaceDef& space, const EngineConfig& config, Evaluator& evaluator) {
    SearchEngine engine(space, config, evaluator);
    return engine.run();
}

}  // namespace rnas

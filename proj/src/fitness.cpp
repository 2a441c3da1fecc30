#include "rnas/fitness.hpp"

#include <algorithm>
#include <cmath>

#include "rnas/hash.hpp"

namespace rnas {

namespace {

constexpr std::uint64_t kAccuracyNoise = 1;
constexpr std::uint64_t kRobustnessNoise = 2;

double clamp_pct(double x) { return std::clamp(x, 0.0, 100.0); }

double noise(const SurrogateConfig& cfg, const ArchDigest& digest, std::uint64_t stream) {
    if (cfg.noise_amplitude == 0.0) return 0.0;
    const double u = uniform_unit(derive_seed(cfg.noise_seed, {digest.value, stream}));
    return cfg.noise_amplitude * (2.0 * u - 1.0);
}

nlohmann::ordered_json terms_to_json(const LandscapeTerms& t) {
    nlohmann::ordered_json j;
    j["base"] = t.base;
    j["active_nodes"] = t.active_nodes;
    j["edges"] = t.edges;
    j["edge_peak"] = t.edge_peak;
    j["edge_deviation_sq"] = t.edge_deviation_sq;
    j["repeats"] = t.repeats;
    j["width_step"] = t.width_step;
    for (LayerType lt : kAllLayerTypes) j[std::string(to_string(lt))] = t.per_layer[static_cast<std::size_t>(lt)];
    return j;
}

double number(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) throw std::invalid_argument("surrogate." + key + ": expected a number");
    return v.get<double>();
}

LandscapeTerms terms_from_json(const nlohmann::json& j, LandscapeTerms t, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("surrogate." + where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        const std::string path = where + "." + key;
        if (key == "base") {
            t.base = number(value, path);
        } else if (key == "active_nodes") {
            t.active_nodes = number(value, path);
        } else if (key == "edges") {
            t.edges = number(value, path);
        } else if (key == "edge_peak") {
            t.edge_peak = number(value, path);
        } else if (key == "edge_deviation_sq") {
            t.edge_deviation_sq = number(value, path);
        } else if (key == "repeats") {
            t.repeats = number(value, path);
        } else if (key == "width_step") {
            t.width_step = number(value, path);
        } else if (auto lt = layer_type_from_string(key)) {
            t.per_layer[static_cast<std::size_t>(*lt)] = number(value, path);
        } else {
            throw std::invalid_argument("surrogate: unknown key '" + path + "'");
        }
    }
    return t;
}

}  // namespace

double aggregate(const EvalScores& s, const FitnessWeights& w) {
    const double fitness = w.mu1 * s.accuracy_pct + w.mu2 * s.robustness_pct -
                           w.mu3 * (static_cast<double>(s.param_count) / 1e6);
    if (!std::isfinite(fitness)) throw FitnessError("fitness is not finite; check the weight vector");
    return fitness;
}

nlohmann::ordered_json to_json(const ScoredIndividual& ind) {
    nlohmann::ordered_json j;
    j["id"] = ind.id;
    j["birth_generation"] = ind.birth_generation;
    j["parent_id"] = ind.parent_id ? nlohmann::ordered_json(*ind.parent_id) : nlohmann::ordered_json(nullptr);
    j["eval_source"] = ind.eval_source;
    if (ind.scores) {
        j["status"] = "ok";
        j["accuracy_pct"] = ind.scores->accuracy_pct;
        j["robustness_pct"] = ind.scores->robustness_pct;
        j["param_count"] = ind.scores->param_count;
        j["fitness"] = ind.fitness;
    } else {
        j["status"] = "failed";
        j["fitness"] = nullptr;
    }
    j["arch"] = to_json(ind.arch);
    return j;
}

ScoredIndividual individual_from_json(const nlohmann::json& j) {
    ScoredIndividual ind;
    try {
        ind.id = j.at("id").get<std::uint64_t>();
        ind.birth_generation = j.at("birth_generation").get<std::int64_t>();
        if (!j.at("parent_id").is_null()) ind.parent_id = j.at("parent_id").get<std::uint64_t>();
        ind.eval_source = j.at("eval_source").get<std::string>();
        const auto status = j.at("status").get<std::string>();
        if (status == "ok") {
            ind.scores = EvalScores{j.at("accuracy_pct").get<double>(), j.at("robustness_pct").get<double>(),
                                    j.at("param_count").get<std::uint64_t>()};
            ind.fitness = j.at("fitness").get<double>();
        } else if (status != "failed") {
            throw ParseError("unknown individual status '" + status + "'", 0, "/status");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed individual record: ") + e.what(), 0, "");
    }
    ind.arch = architecture_from_json(j.at("arch"));
    return ind;
}

nlohmann::ordered_json to_json(const SurrogateConfig& cfg) {
    nlohmann::ordered_json j;
    j["accuracy"] = terms_to_json(cfg.accuracy);
    j["robustness"] = terms_to_json(cfg.robustness);
    j["noise_seed"] = cfg.noise_seed;
    j["noise_amplitude"] = cfg.noise_amplitude;
    return j;
}

SurrogateConfig surrogate_from_json(const nlohmann::json& j) {
    SurrogateConfig cfg;
    if (!j.is_object()) throw std::invalid_argument("surrogate: expected an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "accuracy") {
            cfg.accuracy = terms_from_json(value, cfg.accuracy, key);
        } else if (key == "robustness") {
            cfg.robustness = terms_from_json(value, cfg.robustness, key);
        } else if (key == "noise_seed") {
            if (!value.is_number_unsigned()) throw std::invalid_argument("surrogate.noise_seed: expected an unsigned integer");
            cfg.noise_seed = value.get<std::uint64_t>();
        } else if (key == "noise_amplitude") {
            cfg.noise_amplitude = number(value, key);
            if (cfg.noise_amplitude < 0) throw std::invalid_argument("surrogate.noise_amplitude: must be >= 0");
        } else {
            throw std::invalid_argument("surrogate: unknown key '" + key + "'");
        }
    }
    return cfg;
}

ArchFeatures features(const Architecture& arch) {
    ArchFeatures f;
    const auto active = active_nodes(arch.block);
    f.active_nodes = static_cast<int>(active.size());
    f.edges = static_cast<int>(arch.block.edges.size());
    f.repeats = arch.repeats;
    f.width_step = std::log2(static_cast<double>(arch.hidden_width) / 128.0);
    for (int v : active) ++f.per_layer[static_cast<std::size_t>(arch.block.node(v).layer_type)];
    return f;
}

double landscape_value(const LandscapeTerms& t, const ArchFeatures& f) {
    const double dev = f.edges - t.edge_peak;
    double v = t.base + t.active_nodes * f.active_nodes + t.edges * f.edges + t.edge_deviation_sq * dev * dev +
               t.repeats * f.repeats + t.width_step * f.width_step;
    for (std::size_t i = 0; i < f.per_layer.size(); ++i) v += t.per_layer[i] * f.per_layer[i];
    return v;
}

EvalScores surrogate_eval(const Architecture& arch, const SurrogateConfig& cfg) {
    const ArchFeatures f = features(arch);
    const ArchDigest digest = canonical_hash(arch);
    EvalScores s;
    s.accuracy_pct = clamp_pct(landscape_value(cfg.accuracy, f) + noise(cfg, digest, kAccuracyNoise));
    s.robustness_pct = clamp_pct(landscape_value(cfg.robustness, f) + noise(cfg, digest, kRobustnessNoise));
    s.param_count = count_params(arch, cfg.shape);
    return s;
}

EvalOutcome evaluate_now(Evaluator& evaluator, const Architecture& arch) {
    constexpr std::uint64_t kTicket = ~std::uint64_t{0};
    evaluator.submit(kTicket, arch);
    auto c = evaluator.wait();
    if (c.ticket != kTicket) throw std::logic_error("evaluate_now: evaluator had other work in flight");
    return std::move(c.outcome);
}

void SurrogateEvaluator::submit(std::uint64_t ticket, const Architecture& arch) {
    ++calls_;
    done_.push_back({ticket, {surrogate_eval(arch, cfg_), "surrogate", {}}});
}

Evaluator::Completion SurrogateEvaluator::wait() {
    if (done_.empty()) throw std::logic_error("SurrogateEvaluator::wait with nothing submitted");
    auto c = std::move(done_.front());
    done_.pop_front();
    return c;
}

std::optional<FitnessCache::Entry> FitnessCache::find(const ArchDigest& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    ++hits_;
    return it->second;
}

void FitnessCache::store(const ArchDigest& key, Entry entry) {
    std::lock_guard lock(mu_);
    entries_.try_emplace(key, std::move(entry));
}

std::size_t FitnessCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::uint64_t FitnessCache::hits() const {
    std::lock_guard lock(mu_);
    return hits_;
}

void FitnessCache::clear() {
    std::lock_guard lock(mu_);
    entries_.clear();
    hits_ = 0;
}

EvalOutcome cached_eval(const Architecture& arch, Evaluator& evaluator, FitnessCache& cache) {
    const ArchDigest key = canonical_hash(arch);
    if (auto hit = cache.find(key)) return {hit->scores, hit->source, {}};
    EvalOutcome out = evaluate_now(evaluator, arch);
    if (out.ok()) cache.store(key, {*out.scores, out.source});
    return out;
}

}  // namespace rnas

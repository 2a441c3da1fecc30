#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "rnas/analysis.hpp"
#include "rnas/config.hpp"
#include "rnas/dispatch/clock.hpp"
#include "rnas/dispatch/dispatcher.hpp"
#include "rnas/dispatch/protocol.hpp"
#include "rnas/dispatch/transport.hpp"
#include "rnas/engine.hpp"
#include "rnas/evolution.hpp"
#include "rnas/hash.hpp"
#include "rnas/history.hpp"
#include "rnas/search_space.hpp"

namespace rnas::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Carries an exit status out of a command.
struct Failure : std::runtime_error {
    Failure(int code, const std::string& what) : std::runtime_error(what), code(code) {}
    int code;
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Failure(kExitIo, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const fs::path& path, std::string_view text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Failure(kExitIo, "cannot write " + tmp.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.flush();
        if (!out) throw Failure(kExitIo, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Failure(kExitIo, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string parse_failure(const fs::path& path, const ParseError& e) {
    const std::string what = e.what();
    std::string msg = path.string();
    if (e.position > 0 && what.find("byte " + std::to_string(e.position)) == std::string::npos) {
        msg += ": byte " + std::to_string(e.position);
    }
    if (!e.path.empty() && what.find(e.path) == std::string::npos) msg += ": at " + e.path;
    return msg + ": " + what;
}

Architecture load_architecture(const fs::path& path) {
    const std::string text = read_text(path);
    try {
        return parse_architecture(text);
    } catch (const ParseError& e) {
        throw Failure(kExitIo, parse_failure(path, e));
    }
}

RunConfig load_config(const fs::path& path, const std::string& text) {
    try {
        return parse_config(text);
    } catch (const ParseError& e) {
        throw Failure(kExitConfig, parse_failure(path, e));
    } catch (const ConfigError& e) {
        throw Failure(kExitConfig, path.string() + ": " + e.what());
    }
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// --- search -----------------------------------------------------------------

struct SearchArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool resume = false;
    std::vector<std::string> workers;
    std::string listen;
    std::string port_file;
    bool surrogate = false;
    std::optional<std::int64_t> halt_after;
    std::optional<std::int64_t> max_evaluations;
    int checkpoint_every = 1;
};

struct RunPaths {
    fs::path manifest, checkpoint, history, best, config;

    explicit RunPaths(const fs::path& dir)
        : manifest(dir / "manifest.json"),
          checkpoint(dir / "checkpoint.rnas"),
          history(dir / "history.jsonl"),
          best(dir / "best_arch.json"),
          config(dir / "config.effective.json") {}
};

ordered_json manifest_json(const RunConfig& cfg, const std::string& raw_digest, const std::string& effective,
                           const RunPaths& paths, const std::string& started, const json& previous) {
    ordered_json m;
    m["format"] = "rnas-manifest";
    m["version"] = 1;
    m["config_digest"] = raw_digest;
    m["effective_digest"] = effective;
    m["seed"] = cfg.engine.seed;
    m["started_at"] = started;
    m["finished_at"] = nullptr;
    m["evaluator"] = cfg.evaluator == EvaluatorKind::Surrogate ? "surrogate" : "external";
    m["status"] = "running";
    m["resumed_at"] = ordered_json::array();
    if (previous.is_object() && previous.contains("resumed_at") && previous["resumed_at"].is_array()) {
        for (const auto& r : previous["resumed_at"])
            if (r.is_string()) m["resumed_at"].push_back(r.get<std::string>());
    }
    m["outputs"] = {{"manifest", paths.manifest.filename().string()},
                    {"checkpoint", paths.checkpoint.filename().string()},
                    {"history", paths.history.filename().string()},
                    {"best_architecture", paths.best.filename().string()},
                    {"effective_config", paths.config.filename().string()}};
    return m;
}

// Reads the history file, dropping a torn final line left by an interrupted write.
std::vector<ScoredIndividual> load_history_for_resume(const fs::path& path) {
    if (!fs::exists(path)) return {};
    std::string text = read_text(path);
    if (!text.empty() && text.back() != '\n') {
        spdlog::warn("{}: dropping incomplete final line", path.string());
        text.resize(text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1);
    }
    try {
        return read_history(text);
    } catch (const ParseError& e) {
        throw Failure(kExitIo, parse_failure(path, e));
    }
}

struct ExternalPool {
    dispatch::TcpTransport transport;
    dispatch::SteadyClock clock;
    std::unique_ptr<dispatch::Dispatcher> dispatcher;
};

std::unique_ptr<ExternalPool> open_pool(const RunConfig& cfg, const std::string& port_file) {
    auto pool = std::make_unique<ExternalPool>();
    pool->dispatcher = std::make_unique<dispatch::Dispatcher>(pool->transport, pool->clock, cfg.dispatch, cfg.shape);
    try {
        if (cfg.pool.listen) {
            const auto at = dispatch::parse_endpoint(*cfg.pool.listen);
            const auto port = pool->transport.listen(at);
            spdlog::info("listening for workers on {}:{}", at.host, port);
            if (!port_file.empty()) write_atomic(port_file, std::to_string(port) + "\n");
        }
        for (const auto& w : cfg.pool.workers) pool->transport.connect(dispatch::parse_endpoint(w));
    } catch (const dispatch::TransportError& e) {
        throw Failure(kExitProtocol, e.what());
    }
    const auto want = static_cast<std::size_t>(cfg.pool.min_workers);
    if (!pool->dispatcher->wait_for_workers(want, cfg.pool.worker_wait_s)) {
        throw Failure(kExitProtocol, "only " + std::to_string(pool->dispatcher->registered_workers()) + " of " +
                                         std::to_string(want) + " worker(s) registered within " +
                                         std::to_string(cfg.pool.worker_wait_s) + " s");
    }
    spdlog::info("{} worker(s) registered", pool->dispatcher->registered_workers());
    return pool;
}

int cmd_search(const SearchArgs& a, std::ostream& out) {
    const fs::path config_path(a.config);
    const std::string raw = read_text(config_path);
    RunConfig cfg = load_config(config_path, raw);
    if (a.seed) cfg.engine.seed = *a.seed;
    if (a.max_evaluations) cfg.engine.max_evaluations = *a.max_evaluations;
    if (!a.workers.empty()) cfg.pool.workers = a.workers;
    if (!a.listen.empty()) cfg.pool.listen = a.listen;
    if (!a.workers.empty() || !a.listen.empty()) cfg.evaluator = EvaluatorKind::External;
    if (a.surrogate) cfg.evaluator = EvaluatorKind::Surrogate;
    try {
        cfg.engine.check();
        for (const auto& w : cfg.pool.workers) dispatch::parse_endpoint(w);
        if (cfg.pool.listen) dispatch::parse_endpoint(*cfg.pool.listen);
    } catch (const std::invalid_argument& e) {
        throw Failure(kExitConfig, e.what());
    }
    if (cfg.evaluator == EvaluatorKind::External && cfg.pool.workers.empty() && !cfg.pool.listen) {
        throw Failure(kExitConfig, "external evaluator needs --workers or --listen (or dispatch.workers/listen)");
    }
    if (a.checkpoint_every < 1) throw Failure(kExitConfig, "--checkpoint-every must be at least 1");

    const fs::path dir(a.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Failure(kExitIo, "cannot create " + dir.string() + ": " + ec.message());
    const RunPaths paths(dir);

    const bool have_checkpoint = fs::exists(paths.checkpoint);
    if (have_checkpoint && !a.resume) {
        throw Failure(kExitConfig, dir.string() + " already holds a run; pass --resume to continue it");
    }

    const std::string effective = effective_digest(cfg);
    std::optional<Checkpoint> snapshot;
    std::vector<ScoredIndividual> prior;
    json previous_manifest;
    std::string started = utc_now();
    if (a.resume && have_checkpoint) {
        try {
            snapshot = read_checkpoint(read_text(paths.checkpoint));
        } catch (const CheckpointError& e) {
            throw Failure(kExitCheckpoint, paths.checkpoint.string() + ": " + e.what());
        }
        if (snapshot->config_digest != effective) {
            throw Failure(kExitCheckpoint, "checkpoint digest " + snapshot->config_digest +
                                               " does not match the configuration (" + effective + ")");
        }
        prior = load_history_for_resume(paths.history);
        if (fs::exists(paths.manifest)) {
            previous_manifest = json::parse(read_text(paths.manifest), nullptr, false);
            if (previous_manifest.is_object() && previous_manifest.value("started_at", json()).is_string()) {
                started = previous_manifest["started_at"].get<std::string>();
            }
        }
    } else if (a.resume) {
        spdlog::warn("no checkpoint in {}; starting a fresh run", dir.string());
    }

    const std::string raw_digest = to_hex(fnv1a(raw));
    ordered_json manifest = manifest_json(cfg, raw_digest, effective, paths, started, previous_manifest);
    if (snapshot) manifest["resumed_at"].push_back(utc_now());
    write_atomic(paths.manifest, manifest.dump(2) + "\n");
    write_atomic(paths.config, to_json(cfg).dump(2) + "\n");

    std::unique_ptr<Evaluator> surrogate;
    std::unique_ptr<ExternalPool> pool;
    Evaluator* evaluator = nullptr;
    if (cfg.evaluator == EvaluatorKind::Surrogate) {
        surrogate = std::make_unique<SurrogateEvaluator>(cfg.surrogate);
        evaluator = surrogate.get();
    } else {
        pool = open_pool(cfg, a.port_file);
        evaluator = pool->dispatcher.get();
    }

    SearchEngine engine(cfg.space, cfg.engine, *evaluator, effective);
    if (snapshot) {
        try {
            engine.restore(*snapshot, std::move(prior));
        } catch (const CheckpointError& e) {
            throw Failure(kExitCheckpoint, e.what());
        }
        std::string kept;
        for (const auto& h : engine.history()) kept += history_line(h);
        write_atomic(paths.history, kept);
        spdlog::info("resumed at generation {} with {} history records", engine.generation(),
                     engine.history().size());
    } else {
        write_atomic(paths.history, "");
    }

    std::ofstream history(paths.history, std::ios::binary | std::ios::app);
    if (!history) throw Failure(kExitIo, "cannot append to " + paths.history.string());

    auto save = [&] {
        history.flush();
        if (!history) throw Failure(kExitIo, "write to " + paths.history.string() + " failed");
        write_atomic(paths.checkpoint, write_checkpoint(engine.checkpoint()));
        if (engine.best()) write_atomic(paths.best, serialize(engine.best()->arch) + "\n");
    };

    RunControl control;
    control.halt_after_generations = a.halt_after;
    control.on_evaluated = [&](const ScoredIndividual& ind) { history << history_line(ind); };
    control.on_generation = [&](const GenerationReport& r) {
        if (r.improved) spdlog::debug("generation {}: best fitness {}", r.generation, r.best_fitness);
        if (r.generation % 100 == 0) spdlog::info("generation {}: best fitness {}", r.generation, r.best_fitness);
        if (r.generation % a.checkpoint_every == 0) save();
    };

    SearchResult result;
    try {
        if (!engine.initialized()) {
            engine.init_population(control);
            save();
            spdlog::info("initial population ready, best fitness {}", engine.best()->fitness);
        }
        result = engine.run(control);
        save();
    } catch (const dispatch::PoolEmptyError& e) {
        throw Failure(kExitProtocol, e.what());
    } catch (const dispatch::NoWorkersError& e) {
        throw Failure(kExitProtocol, e.what());
    } catch (const dispatch::ProtocolError& e) {
        throw Failure(kExitProtocol, e.what());
    } catch (const EvolutionError& e) {
        throw Failure(kExitSearch, e.what());
    } catch (const FitnessError& e) {
        throw Failure(kExitSearch, e.what());
    }

    manifest["finished_at"] = utc_now();
    manifest["status"] = to_string(result.reason);
    write_atomic(paths.manifest, manifest.dump(2) + "\n");

    out << "stop: " << to_string(result.reason) << "\n"
        << "generations: " << result.generations << "\n"
        << "evaluated: " << result.history.size() << "\n"
        << "best_id: " << result.best.id << "\n"
        << "best_fitness: " << result.best.fitness << "\n"
        << "best_architecture: " << paths.best.string() << "\n";
    return kExitOk;
}

// --- single-file commands ---------------------------------------------------

SearchSpaceDef space_for(const std::string& config_path) {
    if (config_path.empty()) return domain_space();
    return load_config(config_path, read_text(config_path)).space;
}

int cmd_validate(const std::string& arch_path, const std::string& config_path, std::ostream& out) {
    const std::string text = read_text(arch_path);
    Architecture arch;
    try {
        arch = parse_architecture(text);
    } catch (const ParseError& e) {
        // Well-formed JSON whose values fall outside the architecture domain.
        if (e.position > 0) throw Failure(kExitIo, parse_failure(arch_path, e));
        out << "violation: " << e.what() << "\ninvalid\n";
        return kExitInvalid;
    }
    const ValidationReport report = validate(arch, space_for(config_path));
    for (const auto& v : report.violations) out << "violation: " << v << "\n";
    for (const auto& w : report.warnings) out << "warning: " << w << "\n";
    out << (report.ok ? "ok" : "invalid") << "\n";
    return report.ok ? kExitOk : kExitInvalid;
}

int cmd_params(const std::string& arch_path, const ModelShapeConfig& shape, bool as_json, std::ostream& out) {
    const Architecture arch = load_architecture(arch_path);
    ParamBreakdown b;
    try {
        b = count_params_breakdown(arch, shape);
    } catch (const ParamOverflow& e) {
        throw Failure(kExitInvalid, e.what());
    }
    if (as_json) {
        ordered_json j{{"embedding", b.embedding}, {"per_block", b.per_block}, {"repeats", arch.repeats},
                       {"blocks", b.blocks},       {"classifier", b.classifier}, {"total", b.total}};
        out << j.dump() << "\n";
    } else {
        out << "embedding: " << b.embedding << "\n"
            << "blocks: " << b.blocks << " (" << arch.repeats << " x " << b.per_block << ")\n"
            << "classifier: " << b.classifier << "\n"
            << "total: " << b.total << "\n";
    }
    return kExitOk;
}

int cmd_mutate(const std::string& arch_path, std::uint64_t seed, const std::string& config_path,
               const std::string& out_path, std::ostream& out) {
    const Architecture arch = load_architecture(arch_path);
    const SearchSpaceDef space = space_for(config_path);
    if (!contains(space, arch)) {
        for (const auto& v : validate(arch, space).violations) out << "violation: " << v << "\n";
        throw Failure(kExitInvalid, arch_path + " is not in the search space");
    }
    EvolveResult r;
    try {
        r = evolve(arch, space, seed);
    } catch (const EvolutionError& e) {
        throw Failure(kExitSearch, e.what());
    }
    const std::string record = serialize(r.arch);
    if (!out_path.empty()) write_atomic(out_path, record + "\n");
    out << record << "\n";
    out << "op: " << r.op.describe() << "\n";
    out << "change: " << r.change << "\n";
    for (const auto& line : r.repair_log) out << "repair: " << line << "\n";
    out << "distance: " << distance(arch, r.arch) << "\n";
    return kExitOk;
}

int cmd_analyze(const std::string& history_path, const std::string& out_path, const std::string& json_path,
                std::ostream& out) {
    const std::string text = read_text(history_path);
    std::vector<ScoredIndividual> records;
    try {
        records = read_history(text);
    } catch (const ParseError& e) {
        throw Failure(kExitIo, parse_failure(history_path, e));
    }
    std::vector<StatsRow> rows;
    try {
        rows = all_group_stats(records);
    } catch (const AnalysisError& e) {
        throw Failure(kExitSearch, e.what());
    }
    const std::string csv = emit_csv(rows);
    if (out_path.empty() || out_path == "-") {
        out << csv;
    } else {
        write_atomic(out_path, csv);
    }
    if (!json_path.empty()) write_atomic(json_path, emit_json(rows).dump(2) + "\n");
    std::size_t scored = 0;
    for (const auto& r : records) scored += r.failed() ? 0 : 1;
    spdlog::info("{} records, {} scored, {} rows", records.size(), scored, rows.size());
    return kExitOk;
}

}  // namespace

void init_logging() {
    auto logger = spdlog::stderr_color_mt("rnas");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::level::level_enum level = spdlog::level::info;
    if (const char* env = std::getenv("RNAS_LOG_LEVEL")) level = spdlog::level::from_str(env);
    spdlog::set_level(level);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Evolutionary search for robust compact text-classification architectures", "rnas"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "rnas 0.1.0");

    SearchArgs sa;
    auto* search = app.add_subcommand("search", "Run an evolutionary search");
    search->add_option("--config", sa.config, "Run configuration (JSON)")->required();
    search->add_option("--out", sa.out, "Output directory")->required();
    search->add_option("--seed", sa.seed, "Override engine.seed");
    search->add_flag("--resume", sa.resume, "Continue from the checkpoint in --out");
    search->add_option("--workers", sa.workers, "Worker endpoints HOST:PORT to dial")->delimiter(',');
    search->add_option("--listen", sa.listen, "Accept worker connections on HOST:PORT");
    search->add_option("--port-file", sa.port_file, "Write the bound --listen port here");
    search->add_flag("--surrogate", sa.surrogate, "Use the built-in surrogate evaluator");
    search->add_option("--halt-after", sa.halt_after, "Stop after this many generations (resumable)");
    search->add_option("--max-evaluations", sa.max_evaluations, "Override engine.max_evaluations");
    search->add_option("--checkpoint-every", sa.checkpoint_every, "Generations between checkpoints");

    std::string arch_path, config_path, out_path, json_path;
    auto* val = app.add_subcommand("validate", "Check an architecture against the search space");
    val->add_option("ARCH", arch_path, "Architecture record")->required();
    val->add_option("--config", config_path, "Take the search space from this configuration");

    ModelShapeConfig shape;
    bool as_json = false;
    auto* params = app.add_subcommand("params", "Count model parameters");
    params->add_option("ARCH", arch_path, "Architecture record")->required();
    params->add_option("--vocab", shape.vocab_size, "Vocabulary size")->check(CLI::PositiveNumber);
    params->add_option("--max-pos", shape.max_positions, "Maximum positions")->check(CLI::PositiveNumber);
    params->add_option("--segments", shape.num_segments, "Segment types")->check(CLI::PositiveNumber);
    params->add_option("--classes", shape.num_classes, "Output classes")->check(CLI::PositiveNumber);
    params->add_flag("--json", as_json, "Print JSON");

    std::uint64_t seed = 0;
    auto* mutate = app.add_subcommand("mutate", "Apply one seeded evolution operation");
    mutate->add_option("ARCH", arch_path, "Architecture record")->required();
    mutate->add_option("--seed", seed, "Operation seed")->required();
    mutate->add_option("--config", config_path, "Take the search space from this configuration");
    mutate->add_option("--out", out_path, "Also write the new record here");

    auto* analyze = app.add_subcommand("analyze", "Group statistics over a search history");
    analyze->add_option("HISTORY", arch_path, "history.jsonl")->required();
    analyze->add_option("--out", out_path, "CSV output path ('-' for stdout)")->required();
    analyze->add_option("--json", json_path, "Also write the rows as JSON");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        out << e.what() << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "rnas: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (search->parsed()) return cmd_search(sa, out);
        if (val->parsed()) return cmd_validate(arch_path, config_path, out);
        if (params->parsed()) return cmd_params(arch_path, shape, as_json, out);
        if (mutate->parsed()) return cmd_mutate(arch_path, seed, config_path, out_path, out);
        if (analyze->parsed()) return cmd_analyze(arch_path, out_path, json_path, out);
    } catch (const Failure& e) {
        err << "rnas: " << e.what() << "\n";
        return e.code;
    } catch (const fs::filesystem_error& e) {
        err << "rnas: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "rnas: " << e.what() << "\n";
        return kExitSearch;
    }
    return kExitConfig;
}

}  // namespace rnas::cli

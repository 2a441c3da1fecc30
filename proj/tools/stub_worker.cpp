// Surrogate-backed evaluation worker speaking the line protocol over TCP.
// Used for end-to-end tests and local dry runs of the dispatch layer.

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "rnas/config.hpp"
#include "rnas/dispatch/protocol.hpp"
#include "rnas/dispatch/transport.hpp"
#include "rnas/hash.hpp"

using namespace rnas;
using namespace rnas::dispatch;

namespace {

struct Options {
    std::string connect;
    std::string listen;
    std::string port_file;
    std::string id = "stub";
    std::string config;
    double latency_s = 0.0;
    double error_rate = 0.0;
    double hang_rate = 0.0;
    int crash_after = -1;
    bool answer_pings = true;
    std::uint64_t seed = 0;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int serve(LineSocket& sock, const Options& o, const RunConfig& cfg) {
    std::mt19937_64 rng(derive_seed(o.seed, {fnv1a(o.id)}));
    const auto roll = [&] { return uniform_unit(rng()); };

    Hello hello{o.id, {{"evaluator", "surrogate"}, {"concurrency", 1}}};
    if (!sock.send_line(encode(hello))) return 1;
    int jobs = 0;
    while (true) {
        bool eof = false;
        auto line = sock.read_line(-1, eof);
        if (eof) return 0;
        if (!line) continue;
        Message m;
        try {
            m = decode(*line);
        } catch (const ProtocolError& e) {
            std::cerr << o.id << ": ignoring malformed line: " << e.what() << "\n";
            continue;
        }
        if (auto* ping = std::get_if<Ping>(&m)) {
            if (o.answer_pings) sock.send_line(encode(Pong{ping->nonce}));
            continue;
        }
        auto* req = std::get_if<EvalRequest>(&m);
        if (!req) continue;
        if (o.crash_after >= 0 && jobs >= o.crash_after) {
            std::cerr << o.id << ": exiting on job " << req->job_id << "\n";
            return 3;
        }
        ++jobs;
        const auto start = std::chrono::steady_clock::now();
        if (o.latency_s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(o.latency_s));
        if (roll() < o.hang_rate) continue;

        EvalResult r;
        r.job_id = req->job_id;
        if (roll() < o.error_rate) {
            r.ok = false;
            r.error_message = "injected failure";
        } else {
            const EvalScores s = surrogate_eval(req->arch, cfg.surrogate);
            r.accuracy_pct = s.accuracy_pct;
            r.robustness_pct = s.robustness_pct;
            r.param_count = count_params(req->arch, cfg.shape);
        }
        r.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!sock.send_line(encode(r))) return 0;
    }
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Stub evaluation worker backed by the surrogate landscape", "rnas-stub-worker"};
    auto* conn = app.add_option("--connect", o.connect, "Dial a listening coordinator at HOST:PORT");
    auto* lis = app.add_option("--listen", o.listen, "Accept one coordinator connection on HOST:PORT");
    conn->excludes(lis);
    app.add_option("--port-file", o.port_file, "Write the bound --listen port here");
    app.add_option("--id", o.id, "Worker id announced in hello");
    app.add_option("--config", o.config, "Run configuration providing surrogate and shape settings");
    app.add_option("--latency", o.latency_s, "Seconds spent per evaluation")->check(CLI::NonNegativeNumber);
    app.add_option("--error-rate", o.error_rate, "Probability of an error result")->check(CLI::Range(0.0, 1.0));
    app.add_option("--hang-rate", o.hang_rate, "Probability of never answering a job")->check(CLI::Range(0.0, 1.0));
    app.add_option("--crash-after", o.crash_after, "Exit when job N+1 arrives");
    app.add_flag("!--no-pong", o.answer_pings, "Ignore pings");
    app.add_option("--seed", o.seed, "Fault injection seed");
    CLI11_PARSE(app, argc, argv);

    if (o.connect.empty() == o.listen.empty()) {
        std::cerr << "rnas-stub-worker: exactly one of --connect or --listen is required\n";
        return 2;
    }
    try {
        RunConfig cfg = o.config.empty() ? RunConfig{} : parse_config(read_text(o.config));
        if (!o.connect.empty()) {
            LineSocket sock = LineSocket::dial(parse_endpoint(o.connect));
            return serve(sock, o, cfg);
        }
        LineSocket sock = LineSocket::accept_one(parse_endpoint(o.listen), [&](std::uint16_t port) {
            if (o.port_file.empty()) return;
            const std::string tmp = o.port_file + ".tmp";
            std::ofstream(tmp) << port << "\n";
            std::rename(tmp.c_str(), o.port_file.c_str());
        });
        return serve(sock, o, cfg);
    } catch (const std::exception& e) {
        std::cerr << "rnas-stub-worker: " << e.what() << "\n";
        return 1;
    }
}

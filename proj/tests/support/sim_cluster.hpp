#pragma once

#include <deque>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "rnas/dispatch/clock.hpp"
#include "rnas/dispatch/protocol.hpp"
#include "rnas/dispatch/transport.hpp"
#include "rnas/fitness.hpp"
#include "rnas/hash.hpp"

namespace rnas::testing {

/// Per-job fault probabilities for a simulated worker.
struct StubFaults {
    double hang = 0.0;       // never answer this job
    double crash = 0.0;      // drop the connection halfway through the job
    double duplicate = 0.0;  // send the result twice
    double error = 0.0;      // report status "error"
    double bad_pct = 0.0;    // report a percentage outside [0,100]
    double miscount = 0.0;   // report a wrong param_count
    double garbage = 0.0;    // emit a malformed line and an unknown message type first
    bool answer_pings = true;
};

struct StubSpec {
    std::string id;
    double latency_s = 0.5;
    double jitter_s = 0.0;
    StubFaults faults;
    double connect_at = 0.0;
    double reconnect_after_s = -1.0;  // negative: stay away after a crash or drain
    std::uint64_t seed = 1;
};

/// In-memory cluster of scripted protocol workers on a manual clock. Acts as
/// the dispatcher's transport; every message goes through encode/decode.
class SimCluster final : public dispatch::Transport {
public:
    SimCluster(dispatch::ManualClock& clock, SurrogateConfig surrogate, double net_delay_s = 0.001)
        : clock_(clock), surrogate_(std::move(surrogate)), net_(net_delay_s) {}

    std::size_t add_worker(StubSpec spec) {
        const std::size_t idx = workers_.size();
        workers_.push_back({std::move(spec)});
        workers_.back().rng.seed(workers_.back().spec.seed);
        schedule(workers_.back().spec.connect_at, Connect{idx});
        return idx;
    }

    /// Drops worker `idx`'s connection at time `at`.
    void kill_at(std::size_t idx, double at) { schedule(at, Crash{idx, 0, true}); }

    std::uint64_t faults_injected() const { return faults_; }
    std::uint64_t evaluations_started() const { return started_; }

    void send(dispatch::ConnId conn, const std::string& line) override {
        if (auto it = owner_.find(conn); it != owner_.end()) schedule(clock_.now() + net_, Receive{it->second, conn, line});
    }

    void close(dispatch::ConnId conn) override {
        auto it = owner_.find(conn);
        if (it == owner_.end()) return;
        disconnect(it->second, conn);
    }

    std::optional<dispatch::TransportEvent> poll(double max_wait_s) override {
        const double deadline = clock_.now() + std::max(0.0, max_wait_s);
        while (!events_.empty() && events_.top().time <= deadline) {
            Scheduled s = events_.top();
            events_.pop();
            clock_.advance_to(s.time);
            if (auto* ev = std::get_if<dispatch::TransportEvent>(&s.what)) return *ev;
            process(s.what);
        }
        clock_.advance_to(deadline);
        return std::nullopt;
    }

private:
    struct Connect {
        std::size_t worker;
    };
    struct Receive {
        std::size_t worker;
        dispatch::ConnId conn;
        std::string line;
    };
    struct Finish {
        std::size_t worker;
        dispatch::ConnId conn;
    };
    struct Crash {
        std::size_t worker;
        dispatch::ConnId conn;  // 0: whatever connection is current
        bool scheduled_kill = false;
    };
    using What = std::variant<dispatch::TransportEvent, Connect, Receive, Finish, Crash>;

    struct Scheduled {
        double time;
        std::uint64_t seq;
        What what;
        bool operator>(const Scheduled& o) const { return time > o.time || (time == o.time && seq > o.seq); }
    };

    struct SimWorker {
        StubSpec spec;
        Rng rng;
        dispatch::ConnId conn = 0;
        std::deque<dispatch::EvalRequest> inbox;
        std::optional<dispatch::EvalRequest> current;
        std::map<std::string, std::string> answered;  // job_id -> result line
    };

    void schedule(double t, What w) { events_.push({t, seq_++, std::move(w)}); }

    void to_engine(dispatch::TransportEvent ev) { schedule(clock_.now() + net_, std::move(ev)); }

    void emit(SimWorker& w, const dispatch::Message& m) {
        to_engine({dispatch::TransportEvent::Kind::Line, w.conn, dispatch::encode(m)});
    }

    bool roll(SimWorker& w, double p) {
        if (p <= 0.0) return false;
        const bool hit = uniform_unit(w.rng()) < p;
        faults_ += hit;
        return hit;
    }

    void disconnect(std::size_t idx, dispatch::ConnId conn) {
        SimWorker& w = workers_[idx];
        if (w.conn != conn || conn == 0) return;
        owner_.erase(conn);
        w.conn = 0;
        w.inbox.clear();
        w.current.reset();
        to_engine({dispatch::TransportEvent::Kind::Disconnected, conn, {}});
        if (w.spec.reconnect_after_s >= 0) schedule(clock_.now() + w.spec.reconnect_after_s, Connect{idx});
    }

    void start_next(std::size_t idx) {
        SimWorker& w = workers_[idx];
        if (w.current || w.inbox.empty()) return;
        w.current = std::move(w.inbox.front());
        w.inbox.pop_front();
        ++started_;
        double latency = w.spec.latency_s;
        if (w.spec.jitter_s > 0) latency += w.spec.jitter_s * uniform_unit(w.rng());
        if (roll(w, w.spec.faults.crash)) {
            schedule(clock_.now() + latency / 2, Crash{idx, w.conn});
            return;
        }
        if (roll(w, w.spec.faults.hang)) {
            // The job is silently dropped; the worker moves on.
            w.current.reset();
            start_next(idx);
            return;
        }
        schedule(clock_.now() + latency, Finish{idx, w.conn});
    }

    void process(const What& what) {
        if (const auto* c = std::get_if<Connect>(&what)) {
            SimWorker& w = workers_[c->worker];
            if (w.conn != 0) return;
            w.conn = next_conn_++;
            owner_[w.conn] = c->worker;
            to_engine({dispatch::TransportEvent::Kind::Connected, w.conn, {}});
            emit(w, dispatch::Hello{w.spec.id, {{"sim", true}}});
        } else if (const auto* r = std::get_if<Receive>(&what)) {
            SimWorker& w = workers_[r->worker];
            if (w.conn != r->conn) return;
            const auto m = dispatch::decode(r->line);
            if (const auto* ping = std::get_if<dispatch::Ping>(&m)) {
                if (w.spec.faults.answer_pings) emit(w, dispatch::Pong{ping->nonce});
            } else if (const auto* req = std::get_if<dispatch::EvalRequest>(&m)) {
                if (auto done = w.answered.find(req->job_id); done != w.answered.end()) {
                    to_engine({dispatch::TransportEvent::Kind::Line, w.conn, done->second});
                } else {
                    w.inbox.push_back(*req);
                    start_next(r->worker);
                }
            }
        } else if (const auto* f = std::get_if<Finish>(&what)) {
            SimWorker& w = workers_[f->worker];
            if (w.conn != f->conn || !w.current) return;
            finish(w);
            w.current.reset();
            start_next(f->worker);
        } else if (const auto* k = std::get_if<Crash>(&what)) {
            SimWorker& w = workers_[k->worker];
            faults_ += k->scheduled_kill && w.conn != 0;
            disconnect(k->worker, k->conn == 0 ? w.conn : k->conn);
        }
    }

    void finish(SimWorker& w) {
        const dispatch::EvalRequest& req = *w.current;
        if (roll(w, w.spec.faults.garbage)) {
            to_engine({dispatch::TransportEvent::Kind::Line, w.conn, "{not json"});
            to_engine({dispatch::TransportEvent::Kind::Line, w.conn, R"({"type":"progress","job_id":")" + req.job_id + "\"}"});
        }
        dispatch::EvalResult res;
        res.job_id = req.job_id;
        if (roll(w, w.spec.faults.error)) {
            res.ok = false;
            res.error_message = "injected failure";
        } else {
            const EvalScores s = surrogate_eval(req.arch, surrogate_);
            res.accuracy_pct = s.accuracy_pct;
            res.robustness_pct = s.robustness_pct;
            res.param_count = s.param_count;
            if (roll(w, w.spec.faults.bad_pct)) res.robustness_pct = 140.0;
            if (roll(w, w.spec.faults.miscount)) res.param_count = s.param_count + 1;
        }
        res.elapsed_s = w.spec.latency_s;
        const std::string line = dispatch::encode(res);
        w.answered[req.job_id] = line;
        to_engine({dispatch::TransportEvent::Kind::Line, w.conn, line});
        if (roll(w, w.spec.faults.duplicate)) to_engine({dispatch::TransportEvent::Kind::Line, w.conn, line});
    }

    dispatch::ManualClock& clock_;
    SurrogateConfig surrogate_;
    double net_;
    std::vector<SimWorker> workers_;
    std::map<dispatch::ConnId, std::size_t> owner_;
    std::priority_queue<Scheduled, std::vector<Scheduled>, std::greater<>> events_;
    std::uint64_t seq_ = 0;
    dispatch::ConnId next_conn_ = 1;
    std::uint64_t faults_ = 0;
    std::uint64_t started_ = 0;
};

}  // namespace rnas::testing

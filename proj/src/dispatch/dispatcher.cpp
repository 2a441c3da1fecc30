#include "rnas/dispatch/dispatcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

namespace rnas::dispatch {

namespace {

bool valid_pct(double x) { return std::isfinite(x) && x >= 0.0 && x <= 100.0; }

bool anomalous(DispatchEvent::Kind k) {
    using K = DispatchEvent::Kind;
    switch (k) {
        case K::WorkerLost:
        case K::WorkerDrained:
        case K::WorkerSuspect:
        case K::JobFailed:
        case K::JobTimeout:
        case K::InvalidResult:
        case K::ParamCountMismatch:
        case K::ProtocolViolation:
            return true;
        default:
            return false;
    }
}

}  // namespace

std::string_view to_string(DispatchEvent::Kind k) {
    using K = DispatchEvent::Kind;
    switch (k) {
        case K::WorkerRegistered: return "worker_registered";
        case K::WorkerLost: return "worker_lost";
        case K::WorkerDrained: return "worker_drained";
        case K::WorkerSuspect: return "worker_suspect";
        case K::JobDispatched: return "job_dispatched";
        case K::JobResolved: return "job_resolved";
        case K::JobFailed: return "job_failed";
        case K::JobRequeued: return "job_requeued";
        case K::JobTimeout: return "job_timeout";
        case K::DuplicateResult: return "duplicate_result";
        case K::UnknownJobResult: return "unknown_job_result";
        case K::InvalidResult: return "invalid_result";
        case K::ParamCountMismatch: return "param_count_mismatch";
        case K::UnknownMessage: return "unknown_message";
        case K::ProtocolViolation: return "protocol_violation";
    }
    return "?";
}

void DispatchConfig::check() const {
    if (!(job_timeout_s > 0)) throw std::invalid_argument("dispatch.job_timeout_s: must be positive");
    if (!(ping_interval_s > 0)) throw std::invalid_argument("dispatch.ping_interval_s: must be positive");
    if (max_missed_pings < 1) throw std::invalid_argument("dispatch.max_missed_pings: must be at least 1");
    if (retry_cap < 1) throw std::invalid_argument("dispatch.retry_cap: must be at least 1");
    if (!eval_config.is_object()) throw std::invalid_argument("eval_config: must be an object");
}

Dispatcher::Dispatcher(Transport& transport, Clock& clock, DispatchConfig config, ModelShapeConfig shape)
    : transport_(transport), clock_(clock), cfg_(std::move(config)), shape_(shape) {
    cfg_.check();
}

void Dispatcher::log(DispatchEvent::Kind kind, std::string job, std::string worker, std::string detail) {
    if (anomalous(kind)) {
        spdlog::warn("dispatch {}: job={} worker={} {}", to_string(kind), job, worker, detail);
    } else {
        spdlog::debug("dispatch {}: job={} worker={} {}", to_string(kind), job, worker, detail);
    }
    events_.push_back({kind, clock_.now(), std::move(job), std::move(worker), std::move(detail)});
}

std::size_t Dispatcher::count(DispatchEvent::Kind k) const {
    return static_cast<std::size_t>(
        std::count_if(events_.begin(), events_.end(), [k](const DispatchEvent& e) { return e.kind == k; }));
}

std::size_t Dispatcher::registered_workers() const {
    return static_cast<std::size_t>(
        std::count_if(workers_.begin(), workers_.end(), [](const auto& kv) { return kv.second.registered; }));
}

void Dispatcher::submit(std::uint64_t ticket, const Architecture& arch) {
    const std::string id = job_id_for(ticket);
    if (jobs_.contains(id) || resolved_.contains(id)) throw std::invalid_argument("duplicate job id " + id);
    if (!ever_registered_) throw NoWorkersError("no evaluation workers are registered");
    Job job;
    job.ticket = ticket;
    job.arch = arch;
    job.line = encode(EvalRequest{id, arch, cfg_.eval_config});
    jobs_.emplace(id, std::move(job));
    queue_.push_back(id);
    assign();
}

Evaluator::Completion Dispatcher::wait() {
    while (completions_.empty()) {
        if (jobs_.empty()) throw std::logic_error("Dispatcher::wait with nothing submitted");
        double wait_s = next_deadline() - clock_.now();
        if (registered_workers() == 0) {
            if (!empty_since_) empty_since_ = clock_.now();
            const double give_up = *empty_since_ + cfg_.grace();
            if (clock_.now() >= give_up) {
                throw PoolEmptyError("all evaluation workers are gone; " + std::to_string(jobs_.size()) +
                                     " job(s) cannot be served");
            }
            wait_s = std::min(wait_s, give_up - clock_.now());
        }
        pump(wait_s);
    }
    Completion c = std::move(completions_.front());
    completions_.pop_front();
    return c;
}

bool Dispatcher::wait_for_workers(std::size_t count, double timeout_s) {
    const double until = clock_.now() + timeout_s;
    while (registered_workers() < count) {
        const double left = until - clock_.now();
        if (left <= 0) return false;
        pump(std::min(left, next_deadline() - clock_.now()));
    }
    return true;
}

void Dispatcher::pump(double max_wait_s) {
    if (auto ev = transport_.poll(std::max(0.0, max_wait_s))) handle(*ev);
    run_timers();
    assign();
}

double Dispatcher::next_deadline() const {
    double t = std::numeric_limits<double>::infinity();
    for (const auto& [id, job] : jobs_) {
        if (job.running_on) t = std::min(t, job.deadline);
    }
    for (const auto& [conn, w] : workers_) t = std::min(t, w.next_ping);
    if (!std::isfinite(t)) t = clock_.now() + cfg_.ping_interval_s;
    return t;
}

void Dispatcher::handle(const TransportEvent& ev) {
    switch (ev.kind) {
        case TransportEvent::Kind::Connected: {
            Worker w;
            w.id = "conn-" + std::to_string(ev.conn);
            w.order = worker_order_++;
            // Unregistered connections get this long to say hello.
            w.next_ping = clock_.now() + cfg_.ping_interval_s * cfg_.max_missed_pings;
            workers_[ev.conn] = std::move(w);
            return;
        }
        case TransportEvent::Kind::Disconnected:
            if (workers_.contains(ev.conn)) on_worker_gone(ev.conn, DispatchEvent::Kind::WorkerLost);
            return;
        case TransportEvent::Kind::Line: {
            auto it = workers_.find(ev.conn);
            if (it == workers_.end()) return;  // drained; late traffic
            Message m;
            try {
                m = decode(ev.line);
            } catch (const ProtocolError& e) {
                log(DispatchEvent::Kind::ProtocolViolation, {}, it->second.id, e.what());
                return;
            }
            on_message(ev.conn, it->second, m);
            return;
        }
    }
}

void Dispatcher::on_message(ConnId conn, Worker& w, const Message& m) {
    if (const auto* hello = std::get_if<Hello>(&m)) {
        if (w.registered) {
            log(DispatchEvent::Kind::ProtocolViolation, {}, w.id, "repeated hello");
            return;
        }
        std::string id = hello->worker_id.empty() ? w.id : hello->worker_id;
        const bool taken = std::any_of(workers_.begin(), workers_.end(),
                                       [&](const auto& kv) { return kv.second.registered && kv.second.id == id; });
        if (taken) id += "#" + std::to_string(conn);
        w.id = id;
        w.registered = true;
        w.next_ping = clock_.now() + cfg_.ping_interval_s;
        ever_registered_ = true;
        empty_since_.reset();
        log(DispatchEvent::Kind::WorkerRegistered, {}, w.id, hello->capabilities.dump());
        return;
    }
    if (!w.registered) {
        log(DispatchEvent::Kind::ProtocolViolation, {}, w.id, std::string(type_name(m)) + " before hello");
        return;
    }
    if (const auto* r = std::get_if<EvalResult>(&m)) {
        on_result(conn, w, *r);
    } else if (const auto* ping = std::get_if<Ping>(&m)) {
        transport_.send(conn, encode(Pong{ping->nonce}));
    } else if (const auto* pong = std::get_if<Pong>(&m)) {
        if (w.awaiting_nonce && pong->nonce == *w.awaiting_nonce) {
            w.awaiting_nonce.reset();
            w.missed_pings = 0;
        }
    } else if (const auto* u = std::get_if<Unknown>(&m)) {
        log(DispatchEvent::Kind::UnknownMessage, {}, w.id, "ignored message type '" + u->type + "'");
    } else {
        log(DispatchEvent::Kind::ProtocolViolation, {}, w.id, "unexpected " + std::string(type_name(m)) + " message");
    }
}

void Dispatcher::on_result(ConnId conn, Worker& w, const EvalResult& r) {
    if (w.job == r.job_id) w.job.reset();
    if (resolved_.contains(r.job_id)) {
        log(DispatchEvent::Kind::DuplicateResult, r.job_id, w.id, "already resolved; discarded");
        return;
    }
    auto it = jobs_.find(r.job_id);
    if (it == jobs_.end()) {
        log(DispatchEvent::Kind::UnknownJobResult, r.job_id, w.id, "no such job; discarded");
        return;
    }
    Job& job = it->second;
    const bool current = job.running_on == conn;

    if (r.ok && !(valid_pct(r.accuracy_pct) && valid_pct(r.robustness_pct))) {
        const std::string why = "percentages out of [0,100]: accuracy " + std::to_string(r.accuracy_pct) +
                                ", robustness " + std::to_string(r.robustness_pct);
        log(DispatchEvent::Kind::InvalidResult, r.job_id, w.id, why);
        if (current) attempt_failed(r.job_id, w.id, why);
        return;
    }
    if (!r.ok) {
        // A stale attempt was already counted as failed when it timed out.
        if (current) attempt_failed(r.job_id, w.id, r.error_message);
        return;
    }

    w.suspect = false;
    EvalScores scores{r.accuracy_pct, r.robustness_pct, count_params(job.arch, shape_)};
    if (r.param_count && *r.param_count != scores.param_count) {
        log(DispatchEvent::Kind::ParamCountMismatch, r.job_id, w.id,
            "worker counted " + std::to_string(*r.param_count) + ", engine counts " +
                std::to_string(scores.param_count) + "; using the engine count");
    }
    resolve(r.job_id, {scores, "worker:" + w.id, {}});
}

void Dispatcher::attempt_failed(const std::string& job_id, const std::string& worker, const std::string& why) {
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) return;
    Job& job = it->second;
    job.running_on.reset();
    job.tried.insert(worker);
    job.last_error = why;
    if (++job.failures >= cfg_.retry_cap) {
        resolve(job_id, {std::nullopt, "dispatch",
                         "failed after " + std::to_string(job.failures) + " attempt(s); last error: " + why});
        return;
    }
    log(DispatchEvent::Kind::JobRequeued, job_id, worker, why);
    queue_.push_front(job_id);
}

void Dispatcher::resolve(const std::string& job_id, EvalOutcome outcome) {
    auto it = jobs_.find(job_id);
    const std::uint64_t ticket = it->second.ticket;
    if (it->second.running_on) {
        // Another worker is still on it; its eventual result will be a duplicate.
        if (auto w = workers_.find(*it->second.running_on); w != workers_.end() && w->second.job == job_id) {
            w->second.job.reset();
        }
    }
    jobs_.erase(it);
    std::erase(queue_, job_id);
    resolved_.insert(job_id);
    log(outcome.ok() ? DispatchEvent::Kind::JobResolved : DispatchEvent::Kind::JobFailed, job_id, outcome.source,
        outcome.error);
    completions_.push_back({ticket, std::move(outcome)});
}

void Dispatcher::on_worker_gone(ConnId conn, DispatchEvent::Kind why) {
    auto it = workers_.find(conn);
    Worker w = std::move(it->second);
    workers_.erase(it);
    if (w.registered) log(why, w.job.value_or(""), w.id, {});
    if (w.job) {
        auto job = jobs_.find(*w.job);
        if (job != jobs_.end() && job->second.running_on == conn) attempt_failed(*w.job, w.id, "worker " + w.id + " lost");
    }
    if (registered_workers() == 0 && !empty_since_) empty_since_ = clock_.now();
}

void Dispatcher::run_timers() {
    const double now = clock_.now();
    std::vector<std::string> expired;
    for (const auto& [id, job] : jobs_) {
        if (job.running_on && now >= job.deadline) expired.push_back(id);
    }
    for (const auto& id : expired) {
        Job& job = jobs_.at(id);
        const ConnId conn = *job.running_on;
        std::string worker = "?";
        if (auto w = workers_.find(conn); w != workers_.end()) {
            worker = w->second.id;
            w->second.job.reset();
            if (!w->second.suspect) {
                w->second.suspect = true;
                log(DispatchEvent::Kind::WorkerSuspect, id, worker, "missed the job deadline");
            }
        }
        log(DispatchEvent::Kind::JobTimeout, id, worker, "no result within " + std::to_string(cfg_.job_timeout_s) + " s");
        attempt_failed(id, worker, "timed out on " + worker);
    }

    std::vector<std::pair<ConnId, DispatchEvent::Kind>> drop;
    for (auto& [conn, w] : workers_) {
        if (now < w.next_ping) continue;
        if (!w.registered) {
            drop.emplace_back(conn, DispatchEvent::Kind::ProtocolViolation);
            continue;
        }
        if (w.awaiting_nonce && ++w.missed_pings >= cfg_.max_missed_pings) {
            drop.emplace_back(conn, DispatchEvent::Kind::WorkerDrained);
            continue;
        }
        w.awaiting_nonce = "n" + std::to_string(++nonce_);
        w.next_ping = now + cfg_.ping_interval_s;
        transport_.send(conn, encode(Ping{*w.awaiting_nonce}));
    }
    for (auto [conn, why] : drop) {
        if (why == DispatchEvent::Kind::ProtocolViolation) {
            log(why, {}, workers_.at(conn).id, "no hello; closing connection");
        }
        transport_.close(conn);
        on_worker_gone(conn, why);
    }
}

void Dispatcher::assign() {
    while (!queue_.empty()) {
        const bool any_healthy = std::any_of(workers_.begin(), workers_.end(), [](const auto& kv) {
            return kv.second.registered && !kv.second.suspect;
        });
        Job& job = jobs_.at(queue_.front());
        Worker* best = nullptr;
        ConnId best_conn = 0;
        auto rank = [&](const Worker& w) { return std::pair{job.tried.contains(w.id), w.order}; };
        for (auto& [conn, w] : workers_) {
            if (!w.registered || w.job || (any_healthy && w.suspect)) continue;
            if (!best || rank(w) < rank(*best)) {
                best = &w;
                best_conn = conn;
            }
        }
        if (!best) return;
        const std::string id = queue_.front();
        queue_.pop_front();
        best->job = id;
        job.running_on = best_conn;
        job.deadline = clock_.now() + cfg_.job_timeout_s;
        log(DispatchEvent::Kind::JobDispatched, id, best->id, {});
        transport_.send(best_conn, job.line);
    }
}

}  // namespace rnas::dispatch

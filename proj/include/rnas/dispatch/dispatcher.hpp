#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rnas/dispatch/clock.hpp"
#include "rnas/dispatch/protocol.hpp"
#include "rnas/dispatch/transport.hpp"
#include "rnas/fitness.hpp"

namespace rnas::dispatch {

struct DispatchConfig {
    double job_timeout_s = 1800.0;
    double ping_interval_s = 30.0;
    int max_missed_pings = 3;
    int retry_cap = 3;  // failed attempts before a job resolves as failure
    /// How long jobs may wait with no registered worker before wait() gives
    /// up; negative means "same as job_timeout_s".
    double pool_empty_grace_s = -1.0;
    nlohmann::json eval_config = nlohmann::json::object();

    double grace() const { return pool_empty_grace_s < 0 ? job_timeout_s : pool_empty_grace_s; }
    void check() const;
};

/// Submitting with no worker ever registered.
struct NoWorkersError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Every worker was lost and none came back within the grace period.
struct PoolEmptyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DispatchEvent {
    enum class Kind {
        WorkerRegistered,
        WorkerLost,
        WorkerDrained,
        WorkerSuspect,
        JobDispatched,
        JobResolved,
        JobFailed,
        JobRequeued,
        JobTimeout,
        DuplicateResult,
        UnknownJobResult,
        InvalidResult,
        ParamCountMismatch,
        UnknownMessage,
        ProtocolViolation,
    };
    Kind kind;
    double time = 0.0;
    std::string job_id;
    std::string worker;
    std::string detail;
};

std::string_view to_string(DispatchEvent::Kind k);

/// Evaluator backed by a pool of protocol workers. Single-threaded: all
/// progress happens inside wait() (or pump()), which drives the transport.
///
/// Jobs queue FIFO and go to free workers, preferring workers that are not
/// suspect and have not already failed the job. A job resolves exactly once:
/// the first valid result wins and later copies are discarded. Timeouts,
/// error results, invalid results and lost workers each count as a failed
/// attempt; after `retry_cap` of them the job resolves as a failure.
class Dispatcher final : public Evaluator {
public:
    Dispatcher(Transport& transport, Clock& clock, DispatchConfig config, ModelShapeConfig shape = {});

    void submit(std::uint64_t ticket, const Architecture& arch) override;
    Completion wait() override;
    std::size_t in_flight() const override { return jobs_.size() + completions_.size(); }

    /// Processes at most one transport event (waiting up to `max_wait_s`)
    /// plus any due timers.
    void pump(double max_wait_s);
    /// Pumps until `count` workers are registered or `timeout_s` elapses.
    bool wait_for_workers(std::size_t count, double timeout_s);

    std::size_t registered_workers() const;
    const std::vector<DispatchEvent>& events() const { return events_; }
    std::size_t count(DispatchEvent::Kind k) const;

    static std::string job_id_for(std::uint64_t ticket) { return "job-" + std::to_string(ticket); }

private:
    struct Worker {
        std::string id;
        bool registered = false;
        bool suspect = false;
        std::optional<std::string> job;  // job_id currently assigned
        double next_ping = 0.0;
        std::optional<std::string> awaiting_nonce;
        int missed_pings = 0;
        std::uint64_t order = 0;
    };
    struct Job {
        std::uint64_t ticket = 0;
        Architecture arch;
        std::string line;  // encoded eval request
        int failures = 0;
        std::set<std::string> tried;  // worker ids that failed this job
        std::optional<ConnId> running_on;
        double deadline = 0.0;
        std::string last_error;
    };

    void handle(const TransportEvent& ev);
    void on_message(ConnId conn, Worker& w, const Message& m);
    void on_result(ConnId conn, Worker& w, const EvalResult& r);
    void on_worker_gone(ConnId conn, DispatchEvent::Kind why);
    void attempt_failed(const std::string& job_id, const std::string& worker, const std::string& why);
    void resolve(const std::string& job_id, EvalOutcome outcome);
    void assign();
    void run_timers();
    double next_deadline() const;
    void log(DispatchEvent::Kind kind, std::string job, std::string worker, std::string detail);

    Transport& transport_;
    Clock& clock_;
    DispatchConfig cfg_;
    ModelShapeConfig shape_;

    std::map<ConnId, Worker> workers_;
    std::map<std::string, Job> jobs_;    // unresolved
    std::deque<std::string> queue_;      // job ids waiting for a worker
    std::set<std::string> resolved_;     // for duplicate detection
    std::deque<Completion> completions_;
    std::vector<DispatchEvent> events_;
    bool ever_registered_ = false;
    std::optional<double> empty_since_;
    std::uint64_t worker_order_ = 0;
    std::uint64_t nonce_ = 0;
};

}  // namespace rnas::dispatch

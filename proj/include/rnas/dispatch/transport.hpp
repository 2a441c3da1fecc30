#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rnas::dispatch {

using ConnId = std::uint64_t;

struct TransportEvent {
    enum class Kind { Connected, Line, Disconnected };
    Kind kind = Kind::Line;
    ConnId conn = 0;
    std::string line;
};

/// Line-oriented message transport as seen by the dispatcher.
class Transport {
public:
    virtual ~Transport() = default;
    /// Sends one line (a newline is appended). Silently drops lines for
    /// connections that are already gone.
    virtual void send(ConnId conn, const std::string& line) = 0;
    /// Closes a connection; a Disconnected event follows.
    virtual void close(ConnId conn) = 0;
    /// Next event, waiting at most `max_wait_s` seconds. Empty on timeout.
    virtual std::optional<TransportEvent> poll(double max_wait_s) = 0;
};

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
};

/// "host:port"; throws std::invalid_argument.
Endpoint parse_endpoint(const std::string& text);

/// TCP transport. Can accept incoming worker connections, dial out to
/// listening workers, or both. One reader thread per connection feeds a
/// shared inbox.
class TcpTransport final : public Transport {
public:
    TcpTransport();
    ~TcpTransport() override;
    TcpTransport(const TcpTransport&) = delete;
    TcpTransport& operator=(const TcpTransport&) = delete;

    /// Binds and starts accepting; returns the bound port (useful with port 0).
    std::uint16_t listen(const Endpoint& at);
    ConnId connect(const Endpoint& to);

    void send(ConnId conn, const std::string& line) override;
    void close(ConnId conn) override;
    std::optional<TransportEvent> poll(double max_wait_s) override;

private:
    struct Conn {
        int fd = -1;
        std::thread reader;
    };

    ConnId adopt(int fd);
    void read_loop(ConnId id, int fd);
    void accept_loop();
    void push(TransportEvent ev);

    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<TransportEvent> inbox_;
    std::map<ConnId, std::unique_ptr<Conn>> conns_;
    ConnId next_id_ = 1;
    int listen_fd_ = -1;
    std::thread acceptor_;
    std::atomic<bool> stopping_{false};
};

/// Blocking line reader/writer over a connected socket; used by the stub
/// worker.
class LineSocket {
public:
    explicit LineSocket(int fd) : fd_(fd) {}
    ~LineSocket();
    LineSocket(const LineSocket&) = delete;
    LineSocket& operator=(const LineSocket&) = delete;

    static LineSocket dial(const Endpoint& to);
    /// Accepts exactly one connection on `at`. `on_bound` sees the bound
    /// port before the call blocks.
    static LineSocket accept_one(const Endpoint& at, const std::function<void(std::uint16_t)>& on_bound = {});

    LineSocket(LineSocket&& o) noexcept : fd_(o.fd_), buffer_(std::move(o.buffer_)) { o.fd_ = -1; }

    int fd() const { return fd_; }
    bool send_line(const std::string& line);
    /// Waits up to `timeout_s` (negative = forever). Returns a line, an empty
    /// optional on timeout, and sets `eof` when the peer closed.
    std::optional<std::string> read_line(double timeout_s, bool& eof);

private:
    int fd_;
    std::string buffer_;
};

}  // namespace rnas::dispatch

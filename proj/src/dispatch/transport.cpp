#include "rnas/dispatch/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include <spdlog/spdlog.h>

namespace rnas::dispatch {

namespace {

std::string sys_error(const std::string& what) { return what + ": " + std::strerror(errno); }

// Resolves host:port and returns the first address that succeeds with `use`.
template <typename Use>
int with_address(const Endpoint& ep, bool passive, Use use) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(ep.port);
    const char* host = ep.host.empty() ? nullptr : ep.host.c_str();
    if (int rc = ::getaddrinfo(host, port.c_str(), &hints, &res); rc != 0) {
        throw TransportError("cannot resolve " + ep.host + ":" + port + ": " + ::gai_strerror(rc));
    }
    std::string last = "no usable address";
    for (addrinfo* a = res; a; a = a->ai_next) {
        const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
        if (fd < 0) {
            last = sys_error("socket");
            continue;
        }
        if (use(fd, a)) {
            ::freeaddrinfo(res);
            return fd;
        }
        last = sys_error(passive ? "bind" : "connect");
        ::close(fd);
    }
    ::freeaddrinfo(res);
    throw TransportError(ep.host + ":" + port + ": " + last);
}

int listen_socket(const Endpoint& at) {
    return with_address(at, true, [](int fd, const addrinfo* a) {
        const int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        return ::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 64) == 0;
    });
}

int dial_socket(const Endpoint& to) {
    const int fd = with_address(to, false, [](int s, const addrinfo* a) {
        return ::connect(s, a->ai_addr, a->ai_addrlen) == 0;
    });
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return fd;
}

std::uint16_t bound_port(int fd) {
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    if (addr.ss_family == AF_INET6) return ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
    return ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
}

bool write_all(int fd, const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon + 1 == text.size()) {
        throw std::invalid_argument("endpoint '" + text + "' is not HOST:PORT");
    }
    std::string host = text.substr(0, colon);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw std::invalid_argument("endpoint '" + text + "' has a non-numeric port");
    }
    if (port < 0 || port > 65535) throw std::invalid_argument("endpoint '" + text + "' port out of range");
    return {host, static_cast<std::uint16_t>(port)};
}

TcpTransport::TcpTransport() = default;

TcpTransport::~TcpTransport() {
    stopping_ = true;
    if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
    if (acceptor_.joinable()) acceptor_.join();
    if (listen_fd_ >= 0) ::close(listen_fd_);
    std::map<ConnId, std::unique_ptr<Conn>> conns;
    {
        std::lock_guard lock(mu_);
        conns.swap(conns_);
    }
    for (auto& [id, c] : conns) {
        if (c->fd >= 0) ::shutdown(c->fd, SHUT_RDWR);
    }
    for (auto& [id, c] : conns) {
        if (c->reader.joinable()) c->reader.join();
        if (c->fd >= 0) ::close(c->fd);
    }
}

std::uint16_t TcpTransport::listen(const Endpoint& at) {
    if (listen_fd_ >= 0) throw TransportError("transport is already listening");
    listen_fd_ = listen_socket(at);
    const std::uint16_t port = bound_port(listen_fd_);
    acceptor_ = std::thread([this] { accept_loop(); });
    spdlog::info("listening for workers on {}:{}", at.host.empty() ? "*" : at.host, port);
    return port;
}

ConnId TcpTransport::connect(const Endpoint& to) { return adopt(dial_socket(to)); }

ConnId TcpTransport::adopt(int fd) {
    std::lock_guard lock(mu_);
    const ConnId id = next_id_++;
    auto conn = std::make_unique<Conn>();
    conn->fd = fd;
    inbox_.push_back({TransportEvent::Kind::Connected, id, {}});
    conn->reader = std::thread([this, id, fd] { read_loop(id, fd); });
    conns_.emplace(id, std::move(conn));
    cv_.notify_all();
    return id;
}

void TcpTransport::accept_loop() {
    while (!stopping_) {
        pollfd p{listen_fd_, POLLIN, 0};
        const int rc = ::poll(&p, 1, 200);
        if (rc <= 0) continue;
        const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            if (!stopping_) spdlog::warn("{}", sys_error("accept"));
            continue;
        }
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        adopt(fd);
    }
}

void TcpTransport::read_loop(ConnId id, int fd) {
    std::string buffer;
    char chunk[4096];
    while (true) {
        const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t start = 0;
        for (std::size_t eol; (eol = buffer.find('\n', start)) != std::string::npos; start = eol + 1) {
            std::string line = buffer.substr(start, eol - start);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) push({TransportEvent::Kind::Line, id, std::move(line)});
        }
        buffer.erase(0, start);
    }
    push({TransportEvent::Kind::Disconnected, id, {}});
}

void TcpTransport::push(TransportEvent ev) {
    std::lock_guard lock(mu_);
    inbox_.push_back(std::move(ev));
    cv_.notify_all();
}

void TcpTransport::send(ConnId conn, const std::string& line) {
    int fd = -1;
    {
        std::lock_guard lock(mu_);
        auto it = conns_.find(conn);
        if (it == conns_.end()) return;
        fd = it->second->fd;
    }
    if (!write_all(fd, line + "\n")) {
        spdlog::debug("send to connection {} failed: {}", conn, std::strerror(errno));
        ::shutdown(fd, SHUT_RDWR);
    }
}

void TcpTransport::close(ConnId conn) {
    std::lock_guard lock(mu_);
    auto it = conns_.find(conn);
    if (it != conns_.end()) ::shutdown(it->second->fd, SHUT_RDWR);
}

std::optional<TransportEvent> TcpTransport::poll(double max_wait_s) {
    std::unique_lock lock(mu_);
    const auto wait = std::chrono::duration<double>(std::max(0.0, max_wait_s));
    if (!cv_.wait_for(lock, wait, [this] { return !inbox_.empty(); })) return std::nullopt;
    TransportEvent ev = std::move(inbox_.front());
    inbox_.pop_front();
    if (ev.kind == TransportEvent::Kind::Disconnected) {
        // The reader has exited; reap the connection.
        auto it = conns_.find(ev.conn);
        if (it != conns_.end()) {
            auto conn = std::move(it->second);
            conns_.erase(it);
            lock.unlock();
            if (conn->reader.joinable()) conn->reader.join();
            ::close(conn->fd);
        }
    }
    return ev;
}

LineSocket::~LineSocket() {
    if (fd_ >= 0) ::close(fd_);
}

LineSocket LineSocket::dial(const Endpoint& to) { return LineSocket(dial_socket(to)); }

LineSocket LineSocket::accept_one(const Endpoint& at, const std::function<void(std::uint16_t)>& on_bound) {
    const int lfd = listen_socket(at);
    if (on_bound) on_bound(bound_port(lfd));
    int fd;
    do {
        fd = ::accept4(lfd, nullptr, nullptr, SOCK_CLOEXEC);
    } while (fd < 0 && errno == EINTR);
    const int err = errno;
    ::close(lfd);
    if (fd < 0) {
        errno = err;
        throw TransportError(sys_error("accept"));
    }
    return LineSocket(fd);
}

bool LineSocket::send_line(const std::string& line) { return write_all(fd_, line + "\n"); }

std::optional<std::string> LineSocket::read_line(double timeout_s, bool& eof) {
    eof = false;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(std::max(0.0, timeout_s));
    while (true) {
        if (auto eol = buffer_.find('\n'); eol != std::string::npos) {
            std::string line = buffer_.substr(0, eol);
            buffer_.erase(0, eol + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        int wait_ms = -1;
        if (timeout_s >= 0) {
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) return std::nullopt;
            wait_ms = static_cast<int>(left.count());
        }
        pollfd p{fd_, POLLIN, 0};
        const int rc = ::poll(&p, 1, wait_ms);
        if (rc < 0 && errno == EINTR) continue;
        if (rc == 0) return std::nullopt;
        char chunk[4096];
        const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            eof = true;
            return std::nullopt;
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

}  // namespace rnas::dispatch

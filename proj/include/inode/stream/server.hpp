#pragma once

// TCP endpoint for the line protocol: one thread and one hidden state per
// connection, all sharing the frozen model.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "inode/errors.hpp"
#include "inode/log.hpp"
#include "inode/stream/session.hpp"

namespace inode::stream {

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
};

// "host:port", "[v6]:port" or ":port".
inline Endpoint parse_endpoint(const std::string& spec) {
    const auto colon = spec.rfind(':');
    if (colon == std::string::npos) throw InputError("expected <addr>:<port>, got '" + spec + "'");
    std::string host = spec.substr(0, colon);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    if (host.empty()) host = "0.0.0.0";
    const std::string port_text = spec.substr(colon + 1);
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(port_text, &used);
        if (used != port_text.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw InputError("bad port in '" + spec + "'");
    }
    if (port > 65535) throw InputError("port out of range in '" + spec + "'");
    return {host, static_cast<std::uint16_t>(port)};
}

inline bool send_all(int fd, const std::string& data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const auto n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

// Reads lines from fd until EOF, answering each through a fresh Session.
inline void serve_connection(int fd, const SequenceModel& model, const TimeStats& stats) {
    Session session(model, stats);
    std::string pending, reply;
    char buf[1 << 14];
    for (;;) {
        const auto n = ::recv(fd, buf, sizeof buf, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        pending.append(buf, static_cast<std::size_t>(n));
        std::size_t start = 0;
        for (std::size_t nl; (nl = pending.find('\n', start)) != std::string::npos; start = nl + 1) {
            session.handle(std::string_view(pending).substr(start, nl - start), reply);
        }
        pending.erase(0, start);
        if (!reply.empty()) {
            if (!send_all(fd, reply)) break;
            reply.clear();
        }
    }
    if (!pending.empty()) {
        session.handle(pending, reply);
        send_all(fd, reply);
    }
    ::close(fd);
}

class TcpServer {
public:
    TcpServer(const SequenceModel& model, TimeStats stats, const Endpoint& where) : model_(model), stats_(stats) {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        hints.ai_flags = AI_PASSIVE | AI_NUMERICSERV;
        addrinfo* found = nullptr;
        const std::string port = std::to_string(where.port);
        if (const int rc = ::getaddrinfo(where.host.c_str(), port.c_str(), &hints, &found); rc != 0) {
            throw InputError("cannot resolve '" + where.host + "': " + ::gai_strerror(rc));
        }
        std::string last_error = "no address";
        for (addrinfo* a = found; a; a = a->ai_next) {
            const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
            if (fd < 0) continue;
            const int one = 1;
            ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
            if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
                listen_fd_ = fd;
                break;
            }
            last_error = std::strerror(errno);
            ::close(fd);
        }
        ::freeaddrinfo(found);
        if (listen_fd_ < 0) throw InputError("cannot listen on " + where.host + ":" + port + ": " + last_error);

        sockaddr_storage bound{};
        socklen_t len = sizeof bound;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
        port_ = ntohs(bound.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port
                                                  : reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
    }

    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    ~TcpServer() {
        stop();
        for (auto& t : workers_) t.join();
        if (listen_fd_ >= 0) ::close(listen_fd_);
    }

    std::uint16_t port() const noexcept { return port_; }

    // Accepts until stop() is called.
    void serve() {
        while (!stopping_) {
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) {
                if (errno == EINTR || errno == ECONNABORTED) continue;
                break;
            }
            if (stopping_) {
                ::close(fd);
                break;
            }
            std::lock_guard lock(mutex_);
            workers_.emplace_back([this, fd] {
                try {
                    serve_connection(fd, model_, stats_);
                } catch (const std::exception& e) {
                    warn(std::string("connection failed: ") + e.what());
                    ::close(fd);
                }
            });
        }
    }

    void stop() {
        if (stopping_.exchange(true)) return;
        ::shutdown(listen_fd_, SHUT_RDWR);
    }

private:
    const SequenceModel& model_;
    TimeStats stats_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::mutex mutex_;
    std::vector<std::thread> workers_;
};

}  // namespace inode::stream

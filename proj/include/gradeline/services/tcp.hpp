#pragma once

// Minimal POSIX TCP plumbing for newline-delimited messages.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include "gradeline/error.hpp"

namespace gradeline::services {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  // Wakes any thread blocked on the socket without releasing the descriptor.
  void shutdown() const noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

// "host:port" or ":port" / "port" (host defaults to 127.0.0.1).
inline Endpoint parse_endpoint(std::string_view s) {
  Endpoint e;
  std::string_view port = s;
  if (const auto colon = s.rfind(':'); colon != std::string_view::npos) {
    if (colon > 0) e.host = std::string(s.substr(0, colon));
    port = s.substr(colon + 1);
  }
  int p = 0;
  if (port.empty()) throw InvalidArgument("address '" + std::string(s) + "' has no port");
  for (char c : port) {
    if (c < '0' || c > '9') throw InvalidArgument("address '" + std::string(s) + "' has a bad port");
    p = p * 10 + (c - '0');
    if (p > 65535) throw InvalidArgument("address '" + std::string(s) + "' has a bad port");
  }
  e.port = static_cast<std::uint16_t>(p);
  return e;
}

namespace detail {

inline std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

inline bool wait_fd(int fd, short events, int timeout_ms) {
  pollfd p{fd, events, 0};
  for (;;) {
    const int rc = ::poll(&p, 1, timeout_ms);
    if (rc >= 0) return rc > 0;
    if (errno != EINTR) throw IoError(errno_text("poll"));
  }
}

inline sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string host = ep.host.empty() ? "127.0.0.1" : ep.host;
  if (const int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || !res) {
    throw IoError("cannot resolve '" + host + "': " + ::gai_strerror(rc));
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(ep.port);
  return addr;
}

}  // namespace detail

inline Fd connect_tcp(const Endpoint& ep, int timeout_ms = 5000) {
  const sockaddr_in addr = detail::resolve(ep);
  Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
  if (!fd.valid()) throw IoError(detail::errno_text("socket"));
  if (::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    if (errno != EINPROGRESS) throw IoError("connect " + ep.str() + ": " + std::strerror(errno));
    if (!detail::wait_fd(fd.get(), POLLOUT, timeout_ms)) throw IoError("connect " + ep.str() + ": timed out");
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw IoError("connect " + ep.str() + ": " + std::strerror(err));
  }
  ::fcntl(fd.get(), F_SETFL, ::fcntl(fd.get(), F_GETFL) & ~O_NONBLOCK);
  int one = 1;
  ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return fd;
}

inline void send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(detail::errno_text("send"));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

class Listener {
 public:
  static Listener bind(const Endpoint& ep, int backlog = 64) {
    Listener l;
    sockaddr_in addr = detail::resolve(ep);
    l.fd_ = Fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!l.fd_.valid()) throw IoError(detail::errno_text("socket"));
    int one = 1;
    ::setsockopt(l.fd_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(l.fd_.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
      throw IoError("bind " + ep.str() + ": " + std::strerror(errno));
    }
    if (::listen(l.fd_.get(), backlog) != 0) throw IoError(detail::errno_text("listen"));
    socklen_t len = sizeof(addr);
    ::getsockname(l.fd_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    l.port_ = ntohs(addr.sin_port);
    return l;
  }

  std::uint16_t port() const noexcept { return port_; }
  void close() noexcept {
    fd_.shutdown();
    fd_.reset();
  }

  // Empty on timeout.
  std::optional<Fd> accept(int timeout_ms) {
    if (!fd_.valid()) return std::nullopt;
    if (!detail::wait_fd(fd_.get(), POLLIN, timeout_ms)) return std::nullopt;
    Fd c(::accept4(fd_.get(), nullptr, nullptr, SOCK_CLOEXEC));
    if (!c.valid()) return std::nullopt;
    int one = 1;
    ::setsockopt(c.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return c;
  }

 private:
  Fd fd_;
  std::uint16_t port_ = 0;
};

// Buffered line reader. Lines longer than max_line are discarded up to their
// newline and reported as TooLong, leaving the stream usable.
class LineReader {
 public:
  enum class Status { Line, Eof, Timeout, TooLong };

  LineReader(int fd, std::size_t max_line) : fd_(fd), max_line_(max_line) {}

  Status read_line(std::string& out, int timeout_ms) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
      if (const auto nl = buf_.find('\n', scanned_); nl != std::string::npos) {
        const bool dropped = discarding_ || nl > max_line_;
        discarding_ = false;
        if (!dropped) out.assign(buf_, 0, nl);
        buf_.erase(0, nl + 1);
        scanned_ = 0;
        if (dropped) return Status::TooLong;
        if (!out.empty() && out.back() == '\r') out.pop_back();
        return Status::Line;
      }
      scanned_ = buf_.size();
      if (buf_.size() > max_line_) {
        discarding_ = true;
        buf_.clear();
        scanned_ = 0;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (timeout_ms >= 0 && left.count() <= 0) return Status::Timeout;
      if (!detail::wait_fd(fd_, POLLIN, timeout_ms < 0 ? -1 : static_cast<int>(left.count()))) return Status::Timeout;
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        return Status::Eof;
      }
      if (n == 0) return Status::Eof;
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::size_t max_line_;
  std::string buf_;
  std::size_t scanned_ = 0;
  bool discarding_ = false;
};

// A connected peer with a serialized writer.
class Connection {
 public:
  Connection(Fd fd, std::size_t max_line) : fd_(std::move(fd)), reader_(fd_.get(), max_line) {}

  LineReader::Status read_line(std::string& out, int timeout_ms) { return reader_.read_line(out, timeout_ms); }

  void send_line(std::string_view line) {
    std::lock_guard lock(write_mu_);
    std::string framed(line);
    framed += '\n';
    send_all(fd_.get(), framed);
    bytes_sent_ += framed.size();
  }

  std::size_t bytes_sent() const noexcept { return bytes_sent_.load(); }
  void shutdown() const noexcept { fd_.shutdown(); }

 private:
  Fd fd_;
  LineReader reader_;
  std::mutex write_mu_;
  std::atomic<std::size_t> bytes_sent_{0};
};

// Accept loop with one thread per connection. The session function owns the
// read loop and should return once `running()` turns false.
class LineServer {
 public:
  using Session = std::function<void(Connection&)>;

  LineServer() = default;
  LineServer(const LineServer&) = delete;
  LineServer& operator=(const LineServer&) = delete;
  ~LineServer() { stop(); }

  void start(const Endpoint& ep, std::size_t max_line, Session session) {
    listener_ = Listener::bind(ep);
    max_line_ = max_line;
    session_ = std::move(session);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  std::uint16_t port() const noexcept { return listener_.port(); }
  bool running() const noexcept { return running_.load(); }

  void stop() {
    if (!running_.exchange(false)) return;
    if (accept_thread_.joinable()) accept_thread_.join();
    listener_.close();
    std::list<Worker> workers;
    {
      std::lock_guard lock(mu_);
      for (auto& w : workers_) w.conn->shutdown();
      workers.swap(workers_);
    }
    for (auto& w : workers) {
      if (w.thread.joinable()) w.thread.join();
    }
  }

  // Sends a line to every live connection; failures are ignored.
  void broadcast(std::string_view line) {
    std::lock_guard lock(mu_);
    for (auto& w : workers_) {
      if (w.done->load()) continue;
      try {
        w.conn->send_line(line);
      } catch (const Error&) {
      }
    }
  }

  std::size_t connection_count() {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (auto& w : workers_) n += w.done->load() ? 0 : 1;
    return n;
  }

 private:
  struct Worker {
    std::shared_ptr<Connection> conn;
    std::shared_ptr<std::atomic<bool>> done;
    std::thread thread;
  };

  void accept_loop() {
    while (running_) {
      std::optional<Fd> fd;
      try {
        fd = listener_.accept(100);
      } catch (const Error&) {
        break;
      }
      reap();
      if (!fd) continue;
      auto conn = std::make_shared<Connection>(std::move(*fd), max_line_);
      auto done = std::make_shared<std::atomic<bool>>(false);
      std::lock_guard lock(mu_);
      if (!running_) break;
      workers_.push_back(Worker{conn, done, std::thread([this, conn, done] {
                                  try {
                                    session_(*conn);
                                  } catch (...) {
                                  }
                                  done->store(true);
                                })});
    }
  }

  void reap() {
    std::lock_guard lock(mu_);
    for (auto it = workers_.begin(); it != workers_.end();) {
      if (it->done->load()) {
        it->thread.join();
        it = workers_.erase(it);
      } else {
        ++it;
      }
    }
  }

  Listener listener_;
  std::size_t max_line_ = 0;
  Session session_;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::list<Worker> workers_;
};

}  // namespace gradeline::services

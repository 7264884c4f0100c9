#include "autocab/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "autocab/error.hpp"

namespace autocab {

namespace {

int poll_ms(double timeout_s) { return timeout_s < 0 ? -1 : static_cast<int>(timeout_s * 1000.0); }

}  // namespace

std::pair<std::string, int> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::ParseError, "endpoint needs host:port: " + endpoint);
  std::string host = endpoint.substr(0, colon);
  if (host.empty()) host = "127.0.0.1";
  int port = 0;
  try {
    port = std::stoi(endpoint.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "bad port in " + endpoint);
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::ParseError, "bad port in " + endpoint);
  return {host, port};
}

LineConn::LineConn(int read_fd, int write_fd, bool owns) : read_fd_(read_fd), write_fd_(write_fd), owns_(owns) {}

LineConn::LineConn(LineConn&& other) noexcept { *this = std::move(other); }

LineConn& LineConn::operator=(LineConn&& other) noexcept {
  if (this != &other) {
    close();
    read_fd_ = std::exchange(other.read_fd_, -1);
    write_fd_ = std::exchange(other.write_fd_, -1);
    owns_ = std::exchange(other.owns_, false);
    buffer_ = std::move(other.buffer_);
  }
  return *this;
}

LineConn::~LineConn() { close(); }

void LineConn::close() {
  if (owns_) {
    if (read_fd_ >= 0) ::close(read_fd_);
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  }
  read_fd_ = write_fd_ = -1;
  owns_ = false;
}

LineConn LineConn::connect(const std::string& host, int port, double timeout_s) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || res == nullptr) {
    throw Error(ErrorCode::IoError, "cannot resolve " + host);
  }
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    freeaddrinfo(res);
    throw Error(ErrorCode::IoError, "socket: " + std::string(std::strerror(errno)));
  }
  timeval tv{};
  tv.tv_sec = static_cast<long>(timeout_s);
  tv.tv_usec = static_cast<long>((timeout_s - static_cast<double>(tv.tv_sec)) * 1e6);
  setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  const int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  freeaddrinfo(res);
  if (rc != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw Error(ErrorCode::IoError, "connect " + host + ":" + std::to_string(port) + ": " + why);
  }
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return LineConn(fd, fd, true);
}

bool LineConn::send_line(const std::string& line) {
  if (write_fd_ < 0) return false;
  std::string data = line;
  data.push_back('\n');
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::send(write_fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) {
      const auto w = ::write(write_fd_, data.data() + off, data.size() - off);
      if (w <= 0) return false;
      off += static_cast<std::size_t>(w);
      continue;
    }
    if (n <= 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

LineConn::Status LineConn::read_line(std::string& out, double timeout_s) {
  while (true) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      out = buffer_.substr(0, nl);
      if (!out.empty() && out.back() == '\r') out.pop_back();
      buffer_.erase(0, nl + 1);
      return Status::Line;
    }
    if (read_fd_ < 0) return Status::Eof;
    pollfd p{read_fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, poll_ms(timeout_s));
    if (rc == 0) return Status::Timeout;
    if (rc < 0) {
      if (errno == EINTR) continue;
      return Status::Eof;
    }
    char chunk[65536];
    const auto n = ::read(read_fd_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      if (!buffer_.empty()) {
        out = std::move(buffer_);
        buffer_.clear();
        return Status::Line;
      }
      return Status::Eof;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

Listener::Listener(Listener&& other) noexcept { *this = std::move(other); }

Listener& Listener::operator=(Listener&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
    port_ = other.port_;
  }
  return *this;
}

Listener::~Listener() { close(); }

void Listener::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

Listener Listener::bind(const std::string& host, int port) {
  Listener l;
  l.fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (l.fd_ < 0) throw Error(ErrorCode::BindFailure, std::strerror(errno));
  int one = 1;
  setsockopt(l.fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw Error(ErrorCode::BindFailure, "not an IPv4 address: " + host);
  }
  if (::bind(l.fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(l.fd_, 16) != 0) {
    throw Error(ErrorCode::BindFailure, host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  }
  socklen_t len = sizeof addr;
  getsockname(l.fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  l.port_ = ntohs(addr.sin_port);
  return l;
}

std::optional<LineConn> Listener::accept(double timeout_s) {
  if (fd_ < 0) return std::nullopt;
  pollfd p{fd_, POLLIN, 0};
  if (::poll(&p, 1, poll_ms(timeout_s)) <= 0) return std::nullopt;
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) return std::nullopt;
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return LineConn(fd, fd, true);
}

}  // namespace autocab

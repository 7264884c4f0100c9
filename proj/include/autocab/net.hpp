#pragma once

#include <optional>
#include <string>
#include <utility>

namespace autocab {

// "host:port" or ":port"; host defaults to 127.0.0.1.
std::pair<std::string, int> parse_endpoint(const std::string& endpoint);

// Newline-delimited frames over a stream socket (or a pair of fds).
class LineConn {
 public:
  enum class Status { Line, Eof, Timeout };

  LineConn() = default;
  LineConn(int read_fd, int write_fd, bool owns = true);
  LineConn(LineConn&& other) noexcept;
  LineConn& operator=(LineConn&& other) noexcept;
  LineConn(const LineConn&) = delete;
  LineConn& operator=(const LineConn&) = delete;
  ~LineConn();

  static LineConn connect(const std::string& host, int port, double timeout_s = 5.0);

  bool valid() const { return read_fd_ >= 0; }
  bool send_line(const std::string& line);
  // timeout_s < 0 waits forever.
  Status read_line(std::string& out, double timeout_s = -1.0);
  void close();

 private:
  int read_fd_ = -1;
  int write_fd_ = -1;
  bool owns_ = false;
  std::string buffer_;
};

class Listener {
 public:
  Listener() = default;
  Listener(Listener&& other) noexcept;
  Listener& operator=(Listener&& other) noexcept;
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;
  ~Listener();

  // Port 0 picks an ephemeral port. Throws BindFailure.
  static Listener bind(const std::string& host, int port);

  int port() const { return port_; }
  std::optional<LineConn> accept(double timeout_s);
  void close();

 private:
  int fd_ = -1;
  int port_ = 0;
};

}  // namespace autocab

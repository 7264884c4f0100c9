#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "autocab/engine.hpp"
#include "autocab/net.hpp"

namespace autocab {

inline constexpr int kProtocolVersion = 1;

struct ServerOptions {
  std::string trace_dir;  // empty: AUTOCAB_TRACE_DIR, else ./traces
  double idle_timeout_s = 300.0;
  bool include_png = true;
  std::function<double()> clock;  // seconds; steady clock when empty
};

std::string resolve_trace_dir(const std::string& configured);

// One client connection. Frames in, frames out; no I/O of its own.
class SessionHandler {
 public:
  SessionHandler(std::shared_ptr<const Assets> assets, ServerOptions options);

  nlohmann::json hello() const;
  std::vector<nlohmann::json> handle(std::string_view line);

  double idle_for() const;
  bool idle_expired() const { return idle_for() >= options_.idle_timeout_s; }
  // Ends an open episode with the given termination and flushes its trace.
  std::optional<nlohmann::json> close(Termination why);

  bool active() const { return env_ && env_->active(); }
  const std::vector<std::string>& written_traces() const { return written_; }

 private:
  double now() const;
  nlohmann::json start(const nlohmann::json& frame);
  std::vector<nlohmann::json> act(const nlohmann::json& frame);
  nlohmann::json finish();

  std::shared_ptr<const Assets> assets_;
  ServerOptions options_;
  std::optional<Environment> env_;
  TraceRecorder recorder_;
  bool recording_ = false;
  double last_activity_ = 0.0;
  std::vector<std::string> written_;
};

nlohmann::json error_frame(std::string_view code, std::string_view msg);

// Drives a handler over a line connection until EOF, idle timeout or stop.
void serve_connection(LineConn& conn, SessionHandler& handler, const std::atomic<bool>* stop = nullptr);

class Server {
 public:
  Server(std::shared_ptr<const Assets> assets, ServerOptions options);
  ~Server();

  void bind(const std::string& host, int port);  // throws BindFailure
  int port() const { return listener_.port(); }
  void start();  // accept loop on a background thread
  void stop();
  void run();  // blocking accept loop

 private:
  std::shared_ptr<const Assets> assets_;
  ServerOptions options_;
  Listener listener_;
  std::atomic<bool> stop_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::thread> sessions_;
};

// Single session over stdin/stdout.
void serve_stdio(std::shared_ptr<const Assets> assets, ServerOptions options);

}  // namespace autocab

#include "uqlens/external_model.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <string>
#include <vector>

#include "uqlens/errors.hpp"
#include "uqlens/format.hpp"
#include "uqlens/model.hpp"

extern char** environ;

namespace uqlens {

namespace {

using Clock = std::chrono::steady_clock;

void ignore_sigpipe_once() {
  // A dead child must surface as EPIPE on write, not kill the parent.
  static const int installed = [] {
    struct sigaction sa {};
    sa.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &sa, nullptr);
    return 0;
  }();
  (void)installed;
}

class Pipe {
 public:
  Pipe() {
    if (pipe(fds_) != 0) throw EvalError("external model: pipe() failed");
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  Pipe(const Pipe&) = delete;
  Pipe& operator=(const Pipe&) = delete;

  int read_fd() const { return fds_[0]; }
  int write_fd() const { return fds_[1]; }
  void close_read() {
    if (fds_[0] >= 0) ::close(fds_[0]);
    fds_[0] = -1;
  }
  void close_write() {
    if (fds_[1] >= 0) ::close(fds_[1]);
    fds_[1] = -1;
  }
  int release_read() { return std::exchange(fds_[0], -1); }
  int release_write() { return std::exchange(fds_[1], -1); }

 private:
  int fds_[2] = {-1, -1};
};

class ExternalModel final : public Model {
 public:
  ExternalModel(ExternalModelConfig config, int dimension)
      : config_(std::move(config)), dimension_(dimension) {
    if (config_.command.empty()) throw ConfigError("model params.command: must not be empty");
    if (config_.timeout_ms <= 0) throw ConfigError("model params.timeout_ms: must be > 0");
    if (dimension_ < 1) throw DimensionError("model.dimension must be >= 1");
    ignore_sigpipe_once();
  }

  ~ExternalModel() override { shutdown(); }

  int dimension() const override { return dimension_; }

  double evaluate(const EvalPoint& x) const override {
    const EvalPoint points[] = {x};
    return evaluate_batch(std::span<const EvalPoint>(points, 1)).front();
  }

  std::vector<double> evaluate_batch(std::span<const EvalPoint> points) const override {
    std::lock_guard<std::mutex> lock(io_mutex_);
    ensure_running();
    std::vector<double> out;
    out.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      try {
        validate_point(points[i]);
        send_row(points[i]);
        out.push_back(read_value());
      } catch (const DimensionError&) {
        throw;
      } catch (const Error& e) {
        mark_dead();
        throw EvalError(std::string(e.what()) + " (row " + std::to_string(i) + ")", i);
      }
    }
    return out;
  }

 private:
  void ensure_running() const {
    if (pid_ > 0) return;
    if (failed_) throw EvalError("external model process is not running");

    Pipe to_child;
    Pipe from_child;

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child.read_fd(), STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child.write_fd(), STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, to_child.write_fd());
    posix_spawn_file_actions_addclose(&actions, from_child.read_fd());

    std::vector<char*> argv;
    argv.reserve(config_.command.size() + 1);
    for (const std::string& arg : config_.command) {
      argv.push_back(const_cast<char*>(arg.c_str()));
    }
    argv.push_back(nullptr);

    pid_t pid = -1;
    const int rc =
        posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) {
      failed_ = true;
      throw EvalError("external model: failed to launch '" + config_.command.front() +
                      "': " + std::strerror(rc));
    }

    pid_ = pid;
    stdin_fd_ = to_child.release_write();
    stdout_fd_ = from_child.release_read();
  }

  void send_row(const EvalPoint& x) const {
    std::string row;
    for (std::size_t j = 0; j < x.coords.size(); ++j) {
      if (j > 0) row.push_back(',');
      row += format_double(x.coords[j]);
    }
    row.push_back('\n');

    const char* data = row.data();
    std::size_t remaining = row.size();
    while (remaining > 0) {
      const ssize_t n = ::write(stdin_fd_, data, remaining);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw EvalError("external model: write failed: " + std::string(std::strerror(errno)));
      }
      data += n;
      remaining -= static_cast<std::size_t>(n);
    }
  }

  double read_value() const {
    const auto deadline = Clock::now() + std::chrono::milliseconds(config_.timeout_ms);
    std::string line;
    while (true) {
      const std::size_t newline = buffer_.find('\n');
      if (newline != std::string::npos) {
        line = buffer_.substr(0, newline);
        buffer_.erase(0, newline + 1);
        break;
      }

      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - Clock::now());
      if (remaining.count() <= 0) {
        throw EvalError("external model: timed out after " +
                        std::to_string(config_.timeout_ms) + " ms waiting for a response");
      }

      struct pollfd pfd {};
      pfd.fd = stdout_fd_;
      pfd.events = POLLIN;
      const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw EvalError("external model: poll failed: " + std::string(std::strerror(errno)));
      }
      if (ready == 0) {
        throw EvalError("external model: timed out after " +
                        std::to_string(config_.timeout_ms) + " ms waiting for a response");
      }

      char chunk[4096];
      const ssize_t n = ::read(stdout_fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw EvalError("external model: read failed: " + std::string(std::strerror(errno)));
      }
      if (n == 0) throw EvalError("external model terminated unexpectedly");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }

    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw EvalError("external model: empty response line");

    errno = 0;
    char* end = nullptr;
    const double value = std::strtod(line.c_str(), &end);
    while (end != nullptr && (*end == ' ' || *end == '\t')) ++end;
    if (end == line.c_str() || end == nullptr || *end != '\0') {
      throw EvalError("external model: malformed response '" + line + "'");
    }
    if (errno == ERANGE && !std::isfinite(value)) {
      throw EvalError("external model: response out of range '" + line + "'");
    }
    return value;
  }

  void mark_dead() const {
    failed_ = true;
    reap();
  }

  void shutdown() {
    std::lock_guard<std::mutex> lock(io_mutex_);
    reap();
  }

  void reap() const {
    if (stdin_fd_ >= 0) {
      ::close(stdin_fd_);
      stdin_fd_ = -1;
    }
    if (pid_ > 0) {
      // Give the child a moment to exit on EOF, then force it.
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        const pid_t r = ::waitpid(pid_, &status, WNOHANG);
        if (r == pid_ || r < 0) {
          pid_ = -1;
          break;
        }
        ::usleep(10'000);
      }
      if (pid_ > 0) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
      }
    }
    if (stdout_fd_ >= 0) {
      ::close(stdout_fd_);
      stdout_fd_ = -1;
    }
    buffer_.clear();
  }

  ExternalModelConfig config_;
  int dimension_ = 0;
  mutable std::mutex io_mutex_;
  mutable pid_t pid_ = -1;
  mutable int stdin_fd_ = -1;
  mutable int stdout_fd_ = -1;
  mutable std::string buffer_;
  mutable bool failed_ = false;
};

}  // namespace

std::unique_ptr<Model> make_external_model(const ExternalModelConfig& config, int dimension) {
  return std::make_unique<ExternalModel>(config, dimension);
}

}  // namespace uqlens

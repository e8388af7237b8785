#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <unordered_map>

#include "bbpatch/errors.h"
#include "bbpatch/protocol.h"
#include "bbpatch/remote_oracle.h"

extern char** environ;

namespace bbpatch {

namespace {

using nlohmann::json;

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] {
    struct sigaction sa {};
    sa.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &sa, nullptr);
  });
}

class ChildProcess {
 public:
  explicit ChildProcess(const std::vector<std::string>& argv) {
    if (argv.empty()) throw ArgumentError("subprocess oracle: empty command");
    ignore_sigpipe();
    int to_child[2];
    int from_child[2];
    if (pipe2(to_child, O_CLOEXEC) != 0 || pipe2(from_child, O_CLOEXEC) != 0)
      throw TransportError(std::string("pipe: ") + std::strerror(errno));

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);

    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    const int rc = posix_spawnp(&pid_, args[0], &actions, nullptr, args.data(),
                                environ);
    posix_spawn_file_actions_destroy(&actions);
    close(to_child[0]);
    close(from_child[1]);
    if (rc != 0) {
      close(to_child[1]);
      close(from_child[0]);
      throw TransportError("cannot spawn '" + argv[0] + "': " + std::strerror(rc));
    }
    stdin_fd_ = to_child[1];
    stdout_fd_ = from_child[0];
  }

  ~ChildProcess() {
    if (stdin_fd_ >= 0) close(stdin_fd_);
    if (stdout_fd_ >= 0) close(stdout_fd_);
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 100; ++i) {
        if (waitpid(pid_, &status, WNOHANG) == pid_) return;
        usleep(10000);
      }
      kill(pid_, SIGKILL);
      waitpid(pid_, &status, 0);
    }
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  void write_line(const std::string& line, std::optional<std::uint64_t> id) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(stdin_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError("oracle process closed its input", id);
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::milliseconds timeout,
                        std::optional<std::uint64_t> id) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0)
        throw TransportError("timed out waiting for oracle process", id);
      pollfd pfd{stdout_fd_, POLLIN, 0};
      const int pr = poll(&pfd, 1, static_cast<int>(left.count()));
      if (pr < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("poll: ") + std::strerror(errno), id);
      }
      if (pr == 0) continue;
      char chunk[65536];
      const ssize_t n = ::read(stdout_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("read: ") + std::strerror(errno), id);
      }
      if (n == 0) throw TransportError("oracle process exited", id);
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  pid_t pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  std::string buffer_;
};

json parse_line(const std::string& line, std::optional<std::uint64_t> id) {
  try {
    return json::parse(line);
  } catch (const json::exception&) {
    throw TransportError("oracle process sent a non-JSON line: " +
                             line.substr(0, 200),
                         id);
  }
}

class SubprocessOracle : public Oracle {
 public:
  SubprocessOracle(const std::vector<std::string>& argv, ImageShape shape,
                   int num_classes, const RemoteOptions& options)
      : Oracle(options.id.empty() ? "subprocess:" + argv.at(0) : options.id,
               shape, num_classes, options.max_in_flight),
        timeout_(options.timeout),
        child_(argv) {
    const json hello = parse_line(child_.read_line(timeout_, std::nullopt),
                                  std::nullopt);
    protocol::check_handshake(protocol::parse_handshake(hello), shape,
                              num_classes);
  }

 protected:
  std::vector<Probabilities> do_classify(std::span<const Image> images) override {
    std::lock_guard lock(mutex_);
    std::vector<Probabilities> out(images.size());
    std::unordered_map<std::uint64_t, std::size_t> pending;
    std::size_t next = 0;
    std::size_t done = 0;
    const std::size_t window = static_cast<std::size_t>(max_in_flight());
    while (done < images.size()) {
      while (next < images.size() && pending.size() < window) {
        const std::uint64_t id = next_id_++;
        child_.write_line(protocol::request_json(id, images[next]).dump(), id);
        pending.emplace(id, next);
        ++next;
      }
      const std::optional<std::uint64_t> waiting =
          pending.size() == 1 ? std::optional(pending.begin()->first)
                              : std::nullopt;
      const auto response = protocol::parse_response(
          parse_line(child_.read_line(timeout_, waiting), waiting));
      if (response.error)
        throw TransportError("oracle error: " + *response.error, response.id);
      const auto it = pending.find(response.id);
      if (it == pending.end())
        throw TransportError("response for unknown request", response.id);
      out[it->second] = std::move(*response.probs);
      pending.erase(it);
      ++done;
    }
    return out;
  }

 private:
  std::chrono::milliseconds timeout_;
  ChildProcess child_;
  std::mutex mutex_;
  std::uint64_t next_id_ = 0;
};

}  // namespace

std::unique_ptr<Oracle> subprocess_oracle(const std::vector<std::string>& argv,
                                          ImageShape shape, int num_classes,
                                          const RemoteOptions& options) {
  return std::make_unique<SubprocessOracle>(argv, shape, num_classes, options);
}

std::vector<std::string> split_command_line(const std::string& line) {
  std::vector<std::string> out;
  std::string current;
  bool in_token = false;
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == quote) {
        quote = 0;
      } else if (c == '\\' && quote == '"' && i + 1 < line.size()) {
        current += line[++i];
      } else {
        current += c;
      }
    } else if (c == '\'' || c == '"') {
      quote = c;
      in_token = true;
    } else if (c == '\\' && i + 1 < line.size()) {
      current += line[++i];
      in_token = true;
    } else if (c == ' ' || c == '\t' || c == '\n') {
      if (in_token) out.push_back(std::move(current));
      current.clear();
      in_token = false;
    } else {
      current += c;
      in_token = true;
    }
  }
  if (quote) throw ArgumentError("unterminated quote in command line");
  if (in_token) out.push_back(std::move(current));
  return out;
}

}  // namespace bbpatch

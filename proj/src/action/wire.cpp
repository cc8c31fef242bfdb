#include "thinkact/action/wire.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "json.hpp"
#include "thinkact/error.hpp"
#include "thinkact/protocol/args.hpp"

namespace thinkact::action {

namespace {

using nlohmann::json;
using protocol::ResultStatus;

WireResponse failure(std::int64_t id, ResultStatus status, std::string message) {
  return WireResponse{id, status, std::move(message)};
}

bool write_fd_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

std::string encode_request(const WireRequest& request) {
  return json{{"id", request.id}, {"name", request.name}, {"args", json::parse(protocol::canonical_args(request.args))}}
             .dump() +
         "\n";
}

std::optional<WireRequest> decode_request(std::string_view line) {
  const json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (!j.is_object() || !j.contains("id") || !j.contains("name") || !j.contains("args")) return std::nullopt;
  if (!j["id"].is_number_integer() || !j["name"].is_string()) return std::nullopt;
  auto args = protocol::parse_args(j["args"].dump());
  if (!args) return std::nullopt;
  return WireRequest{j["id"].get<std::int64_t>(), j["name"].get<std::string>(), std::move(*args)};
}

std::string encode_response(const WireResponse& response) {
  return json{{"id", response.id}, {"status", protocol::to_string(response.status)}, {"payload", response.payload}}
             .dump(-1, ' ', false, json::error_handler_t::replace) +
         "\n";
}

std::optional<WireResponse> decode_response(std::string_view line) {
  const json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (!j.is_object() || !j.contains("id") || !j.contains("status") || !j.contains("payload")) return std::nullopt;
  if (!j["id"].is_number_integer() || !j["status"].is_string() || !j["payload"].is_string()) return std::nullopt;
  const auto status = protocol::status_from_string(j["status"].get<std::string>());
  if (!status || *status == ResultStatus::kDenied) return std::nullopt;
  return WireResponse{j["id"].get<std::int64_t>(), *status, j["payload"].get<std::string>()};
}

FdChannel::FdChannel(int read_fd, int write_fd, bool owns_fds)
    : read_fd_(read_fd), write_fd_(write_fd), owns_fds_(owns_fds) {}

FdChannel::~FdChannel() {
  if (!owns_fds_) return;
  ::close(write_fd_);
  if (read_fd_ != write_fd_) ::close(read_fd_);
}

bool FdChannel::write_all(const std::string& data) { return write_fd_all(write_fd_, data); }

WireResponse FdChannel::call(const WireRequest& request, std::chrono::milliseconds timeout) {
  using SteadyClock = std::chrono::steady_clock;
  const auto deadline = SteadyClock::now() + timeout;
  std::unique_lock lock(mutex_, std::defer_lock);
  if (!lock.try_lock_until(deadline)) return failure(request.id, ResultStatus::kTimeout, "timed out waiting for channel");

  std::string line;
  try {
    line = encode_request(request);
  } catch (const std::exception& e) {
    return failure(request.id, ResultStatus::kError, e.what());
  }
  if (!write_all(line)) return failure(request.id, ResultStatus::kError, "channel write failed");

  for (;;) {
    for (auto nl = buffer_.find('\n'); nl != std::string::npos; nl = buffer_.find('\n')) {
      const std::string reply = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      const auto response = decode_response(reply);
      if (!response) return failure(request.id, ResultStatus::kError, "malformed response");
      if (response->id == request.id) return *response;
      // Late answer to an earlier, already timed-out request.
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - SteadyClock::now());
    if (remaining.count() <= 0) return failure(request.id, ResultStatus::kTimeout, "timed out");
    pollfd pfd{read_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready < 0) return failure(request.id, ResultStatus::kError, std::strerror(errno));
    if (ready == 0) return failure(request.id, ResultStatus::kTimeout, "timed out");
    char chunk[4096];
    const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return failure(request.id, ResultStatus::kError, "channel closed");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

ProcessChannel::ProcessChannel(const std::string& command) {
  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0) throw Error(Errc::kIo, "pipe failed");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error(Errc::kIo, "pipe failed");
  }
  pid_ = ::fork();
  if (pid_ < 0) throw Error(Errc::kIo, "fork failed");
  if (pid_ == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  channel_.emplace(from_child[0], to_child[1], true);
}

ProcessChannel::~ProcessChannel() {
  channel_.reset();  // closes the child's stdin
  if (pid_ > 0) {
    int status = 0;
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, &status, 0);
  }
}

WireResponse ProcessChannel::call(const WireRequest& request, std::chrono::milliseconds timeout) {
  return channel_->call(request, timeout);
}

void serve_ndjson(int in_fd, int out_fd, const std::function<WireResponse(const WireRequest&)>& handler) {
  std::string buffer;
  char chunk[4096];
  for (;;) {
    const ssize_t n = ::read(in_fd, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return;
    buffer.append(chunk, static_cast<std::size_t>(n));
    for (auto nl = buffer.find('\n'); nl != std::string::npos; nl = buffer.find('\n')) {
      const std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      const auto request = decode_request(line);
      const auto response =
          request ? handler(*request) : WireResponse{0, ResultStatus::kError, "malformed request"};
      if (!write_fd_all(out_fd, encode_response(response))) return;
    }
  }
}

}  // namespace thinkact::action

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>

#include "thinkact/protocol/types.hpp"

namespace thinkact::action {

// One line of newline-delimited JSON in each direction:
//   request  {"id":..,"name":..,"args":{..}}
//   response {"id":..,"status":"OK"|"ERROR"|"TIMEOUT","payload":".."}
struct WireRequest {
  std::int64_t id = 0;
  std::string name;
  protocol::Args args;
};

struct WireResponse {
  std::int64_t id = 0;
  protocol::ResultStatus status = protocol::ResultStatus::kOk;
  std::string payload;  // raw; the dispatcher neutralizes it
};

std::string encode_request(const WireRequest& request);
std::optional<WireRequest> decode_request(std::string_view line);
std::string encode_response(const WireResponse& response);
// A server may not answer DENIED; that verdict belongs to the local policy.
std::optional<WireResponse> decode_response(std::string_view line);

class ExternalChannel {
 public:
  virtual ~ExternalChannel() = default;
  // Never throws; failures come back as ERROR or TIMEOUT responses.
  virtual WireResponse call(const WireRequest& request, std::chrono::milliseconds timeout) = 0;
};

// Client over a pair of file descriptors (pipe ends or one socket twice).
// Calls are serialized; a stale response left behind by a timed-out call is
// skipped by id.
class FdChannel : public ExternalChannel {
 public:
  FdChannel(int read_fd, int write_fd, bool owns_fds = false);
  ~FdChannel() override;
  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;

  WireResponse call(const WireRequest& request, std::chrono::milliseconds timeout) override;

 private:
  bool write_all(const std::string& data);

  int read_fd_;
  int write_fd_;
  bool owns_fds_;
  std::timed_mutex mutex_;
  std::string buffer_;
};

// Spawns `/bin/sh -c command` and speaks the wire protocol over its stdio.
class ProcessChannel : public ExternalChannel {
 public:
  explicit ProcessChannel(const std::string& command);
  ~ProcessChannel() override;
  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

  WireResponse call(const WireRequest& request, std::chrono::milliseconds timeout) override;

 private:
  int pid_ = -1;
  std::optional<FdChannel> channel_;
};

// Reads requests from `in_fd` until EOF and writes one response per request.
void serve_ndjson(int in_fd, int out_fd, const std::function<WireResponse(const WireRequest&)>& handler);

}  // namespace thinkact::action

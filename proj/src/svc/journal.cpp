#include "thinkact/svc/journal.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "thinkact/error.hpp"

namespace thinkact::svc {

namespace {

using nlohmann::json;

[[noreturn]] void io_error(const std::string& what, const std::filesystem::path& path) {
  throw Error(Errc::kIo, what + " " + path.string() + ": " + std::strerror(errno));
}

void write_all(int fd, std::string_view data, const std::filesystem::path& path) {
  while (!data.empty()) {
    const auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("write", path);
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

void sync_dir(const std::filesystem::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

std::string line_of(const json& record) {
  try {
    return record.dump(-1, ' ', false, json::error_handler_t::strict) + '\n';
  } catch (const json::exception& e) {
    throw Error(Errc::kEncoding, e.what());
  }
}

}  // namespace

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {
  std::error_code ec;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path(), ec);
  if (ec) throw Error(Errc::kIo, "cannot create " + path_.parent_path().string() + ": " + ec.message());
  open_for_append();
}

Journal::~Journal() {
  if (fd_ >= 0) ::close(fd_);
}

void Journal::open_for_append() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) io_error("cannot open", path_);
}

std::vector<json> Journal::replay() {
  std::ifstream in(path_, std::ios::binary);
  if (!in) io_error("cannot read", path_);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  std::vector<json> records;
  std::size_t pos = 0;
  std::size_t good_end = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const bool last = nl == std::string::npos || nl + 1 == text.size();
    const auto line = std::string_view(text).substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    json record;
    bool ok = nl != std::string::npos;
    if (ok) {
      try {
        record = json::parse(line);
      } catch (const json::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      if (!last) throw Error(Errc::kSchema, "corrupt record in " + path_.string() + " at byte " + std::to_string(pos));
      break;
    }
    records.push_back(std::move(record));
    pos = nl + 1;
    good_end = pos;
  }
  if (good_end < text.size()) {
    if (::truncate(path_.c_str(), static_cast<off_t>(good_end)) != 0) io_error("cannot truncate", path_);
    open_for_append();
  }
  appended_ = 0;
  return records;
}

void Journal::append(const json& record) {
  write_all(fd_, line_of(record), path_);
  if (::fdatasync(fd_) != 0) io_error("fdatasync", path_);
  ++appended_;
}

void Journal::compact(const std::vector<json>& records) {
  auto tmp = path_;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) io_error("cannot open", tmp);
  try {
    std::string out;
    for (const auto& r : records) out += line_of(r);
    write_all(fd, out, tmp);
    if (::fsync(fd) != 0) io_error("fsync", tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  if (::rename(tmp.c_str(), path_.c_str()) != 0) io_error("cannot rename onto", path_);
  sync_dir(path_.has_parent_path() ? path_.parent_path() : std::filesystem::path("."));
  open_for_append();
  appended_ = 0;
}

}  // namespace thinkact::svc

#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "json.hpp"

namespace thinkact::svc {

// Append-only JSONL file. Every append is flushed to disk before it returns.
// Not thread-safe; callers serialize writes.
class Journal {
 public:
  // Creates parent directories. Throws Error(kIo).
  explicit Journal(std::filesystem::path path);
  ~Journal();
  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  // Records in file order. A torn last line (crash mid-append) is dropped
  // and cut from the file; a bad line anywhere else is Error(kSchema).
  std::vector<nlohmann::json> replay();

  void append(const nlohmann::json& record);

  // Replaces the file contents with `records` via a temporary file and
  // rename, so a crash leaves either the old or the new journal.
  void compact(const std::vector<nlohmann::json>& records);

  // Records written since the last replay or compaction.
  std::size_t appended() const noexcept { return appended_; }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void open_for_append();

  std::filesystem::path path_;
  int fd_ = -1;
  std::size_t appended_ = 0;
};

}  // namespace thinkact::svc

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace patchforge {

struct ChangedFile {
  std::string path;
  std::optional<std::string> before;
  std::optional<std::string> after;

  bool operator==(const ChangedFile&) const = default;
};

struct CommitRef {
  std::string sha;  // 40 lowercase hex digits
  std::string message;
  std::vector<ChangedFile> changed_files;

  bool operator==(const CommitRef&) const = default;
};

struct PushEvent {
  std::string event_id;
  std::string repo;
  std::vector<CommitRef> commits;
};

struct BugFixLabel {
  bool is_bugfix = false;
  std::optional<std::string> action;   // fix | solve | repair
  std::optional<std::string> subject;  // bug | issue | problem | error | fault | vulnerability

  bool operator==(const BugFixLabel&) const = default;
};

// A retained commit as written by the mine stage.
struct CommitRecord {
  std::string event_id;
  std::string repo;
  CommitRef commit;
  BugFixLabel label;
};

// Case-insensitive substring match on the action and subject keyword stems.
// Each recorded keyword is the earliest match of its group in the message.
BugFixLabel classify_commit(std::string_view message);

// Keeps only files whose path ends in ".c"; empty result means no C change.
std::optional<CommitRef> filter_c_commits(CommitRef commit);

bool is_commit_sha(std::string_view sha);

// Throws DataError if the commit violates its invariants.
void validate_commit(const CommitRef& commit);

struct MineStats {
  std::size_t records_read = 0;
  std::size_t malformed_skipped = 0;
  std::size_t events_scanned = 0;
  std::size_t commits_scanned = 0;
  std::size_t bugfix_commits = 0;
  std::size_t commits_retained = 0;

  MineStats& operator+=(const MineStats& other);
};

// Applies classify_commit then filter_c_commits to every commit, in order.
class Miner {
 public:
  using Sink = std::function<void(const CommitRecord&)>;

  explicit Miner(Sink sink) : sink_(std::move(sink)) {}

  void process(const PushEvent& event);

  // Decodes one archive line. A line that fails to decode or validate is
  // counted as malformed and skipped. Blank lines are ignored.
  void process_line(std::string_view line);

  const MineStats& stats() const noexcept { return stats_; }

 private:
  Sink sink_;
  MineStats stats_;
};

std::vector<CommitRecord> mine_stream(const std::vector<PushEvent>& events,
                                      MineStats* stats = nullptr);

}  // namespace patchforge

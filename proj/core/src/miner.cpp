#include "patchforge/miner.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "patchforge/error.hpp"
#include "patchforge/records.hpp"

namespace patchforge {
namespace {

constexpr std::array<std::string_view, 3> kActionStems = {"fix", "solve",
                                                          "repair"};
constexpr std::array<std::string_view, 6> kSubjectStems = {
    "bug", "issue", "problem", "error", "fault", "vulnerability"};

template <std::size_t N>
std::optional<std::string> earliest(const std::string& lowered,
                                    const std::array<std::string_view, N>& stems) {
  std::size_t best = std::string::npos;
  std::optional<std::string> hit;
  for (std::string_view stem : stems) {
    const std::size_t at = lowered.find(stem);
    if (at < best) {
      best = at;
      hit = std::string(stem);
    }
  }
  return hit;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

BugFixLabel classify_commit(std::string_view message) {
  std::string lowered(message);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  BugFixLabel label;
  label.action = earliest(lowered, kActionStems);
  label.subject = earliest(lowered, kSubjectStems);
  label.is_bugfix = label.action.has_value() && label.subject.has_value();
  if (!label.is_bugfix) {
    label.action.reset();
    label.subject.reset();
  }
  return label;
}

std::optional<CommitRef> filter_c_commits(CommitRef commit) {
  auto& files = commit.changed_files;
  files.erase(std::remove_if(files.begin(), files.end(),
                             [](const ChangedFile& f) { return !ends_with(f.path, ".c"); }),
              files.end());
  if (files.empty()) return std::nullopt;
  return commit;
}

bool is_commit_sha(std::string_view sha) {
  return sha.size() == 40 && std::all_of(sha.begin(), sha.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

void validate_commit(const CommitRef& commit) {
  if (!is_commit_sha(commit.sha))
    throw DataError("commit sha '" + commit.sha + "' is not 40 lowercase hex digits");
  for (const auto& f : commit.changed_files) {
    if (!f.before && !f.after)
      throw DataError("file '" + f.path + "' in commit " + commit.sha +
                      " has neither a before nor an after version");
  }
}

MineStats& MineStats::operator+=(const MineStats& o) {
  records_read += o.records_read;
  malformed_skipped += o.malformed_skipped;
  events_scanned += o.events_scanned;
  commits_scanned += o.commits_scanned;
  bugfix_commits += o.bugfix_commits;
  commits_retained += o.commits_retained;
  return *this;
}

void Miner::process(const PushEvent& event) {
  ++stats_.events_scanned;
  for (const auto& commit : event.commits) {
    ++stats_.commits_scanned;
    BugFixLabel label = classify_commit(commit.message);
    if (!label.is_bugfix) continue;
    ++stats_.bugfix_commits;
    auto kept = filter_c_commits(commit);
    if (!kept) continue;
    ++stats_.commits_retained;
    sink_(CommitRecord{event.event_id, event.repo, std::move(*kept), std::move(label)});
  }
}

void Miner::process_line(std::string_view line) {
  if (std::all_of(line.begin(), line.end(),
                  [](unsigned char c) { return std::isspace(c); }))
    return;
  ++stats_.records_read;
  PushEvent event;
  try {
    event = parse_push_event(line);
  } catch (const DataError&) {
    ++stats_.malformed_skipped;
    return;
  }
  process(event);
}

std::vector<CommitRecord> mine_stream(const std::vector<PushEvent>& events,
                                      MineStats* stats) {
  std::vector<CommitRecord> out;
  Miner miner([&](const CommitRecord& r) { out.push_back(r); });
  for (const auto& e : events) miner.process(e);
  if (stats) *stats = miner.stats();
  return out;
}

}  // namespace patchforge

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "patchforge/extractor.hpp"
#include "patchforge/miner.hpp"

// Newline-delimited JSON encodings of the artifacts exchanged by stages.
// Every parse_* throws DataError on a malformed record.
namespace patchforge {

// {"event_id", "repo", "commits": [{"sha", "message",
//   "files": [{"path", "before", "after"}]}]}; before/after may be null.
PushEvent parse_push_event(std::string_view line);
std::string to_json_line(const PushEvent& event);

// Commit fields inline plus "label": {"is_bugfix", "action", "subject"}.
CommitRecord parse_commit_record(std::string_view line);
std::string to_json_line(const CommitRecord& record);

// {"name", "before_tokens", "after_tokens", "origin": {"sha", "path"}}
FunctionPair parse_function_pair(std::string_view line);
std::string to_json_line(const FunctionPair& pair);

std::vector<FunctionPair> read_dataset(const std::string& path);

// A JSON array of strings, used by `bpe encode|decode`.
std::vector<std::string> parse_string_array(std::string_view line);
std::string to_json_array(const std::vector<std::string>& items);

}  // namespace patchforge

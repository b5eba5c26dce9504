#include "patchforge/records.hpp"

#include "json_util.hpp"
#include "patchforge/io.hpp"

namespace patchforge {

using detail::json;

namespace {

std::optional<std::string> optional_text(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_string())
    throw DataError(std::string("field '") + key + "' must be a string or null");
  return j.at(key).get<std::string>();
}

json null_or(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

CommitRef commit_from(const json& j) {
  CommitRef c;
  c.sha = detail::field<std::string>(j, "sha", "commit");
  c.message = detail::field<std::string>(j, "message", "commit");
  for (const auto& f : detail::array_field(j, "files", "commit")) {
    ChangedFile file;
    file.path = detail::field<std::string>(f, "path", "file");
    file.before = optional_text(f, "before");
    file.after = optional_text(f, "after");
    c.changed_files.push_back(std::move(file));
  }
  validate_commit(c);
  return c;
}

json files_json(const CommitRef& c) {
  json files = json::array();
  for (const auto& f : c.changed_files)
    files.push_back({{"path", f.path}, {"before", null_or(f.before)}, {"after", null_or(f.after)}});
  return files;
}

TokenSequence tokens_from(const json& j, const char* key) {
  const json& arr = detail::array_field(j, key, "function pair");
  TokenSequence out;
  out.reserve(arr.size());
  for (const auto& t : arr) {
    if (!t.is_string()) throw DataError(std::string("'") + key + "' must hold strings");
    out.push_back(t.get<std::string>());
  }
  return out;
}

}  // namespace

PushEvent parse_push_event(std::string_view line) {
  const json j = detail::parse_record(line, "push event");
  PushEvent e;
  e.event_id = detail::field<std::string>(j, "event_id", "push event");
  e.repo = detail::field<std::string>(j, "repo", "push event");
  for (const auto& c : detail::array_field(j, "commits", "push event"))
    e.commits.push_back(commit_from(c));
  return e;
}

std::string to_json_line(const PushEvent& e) {
  json commits = json::array();
  for (const auto& c : e.commits)
    commits.push_back({{"sha", c.sha}, {"message", c.message}, {"files", files_json(c)}});
  return detail::dump_line({{"event_id", e.event_id}, {"repo", e.repo}, {"commits", commits}});
}

CommitRecord parse_commit_record(std::string_view line) {
  const json j = detail::parse_record(line, "commit record");
  CommitRecord r;
  r.event_id = detail::field<std::string>(j, "event_id", "commit record");
  r.repo = detail::field<std::string>(j, "repo", "commit record");
  r.commit = commit_from(j);
  if (j.contains("label")) {
    const json& l = j.at("label");
    r.label.is_bugfix = detail::field<bool>(l, "is_bugfix", "label");
    r.label.action = optional_text(l, "action");
    r.label.subject = optional_text(l, "subject");
  } else {
    r.label = classify_commit(r.commit.message);
  }
  return r;
}

std::string to_json_line(const CommitRecord& r) {
  json j = {{"event_id", r.event_id},
            {"repo", r.repo},
            {"sha", r.commit.sha},
            {"message", r.commit.message},
            {"files", files_json(r.commit)},
            {"label",
             {{"is_bugfix", r.label.is_bugfix},
              {"action", null_or(r.label.action)},
              {"subject", null_or(r.label.subject)}}}};
  return detail::dump_line(j);
}

FunctionPair parse_function_pair(std::string_view line) {
  const json j = detail::parse_record(line, "function pair");
  FunctionPair p;
  p.name = detail::field<std::string>(j, "name", "function pair");
  p.before_tokens = tokens_from(j, "before_tokens");
  p.after_tokens = tokens_from(j, "after_tokens");
  if (j.contains("origin")) {
    p.origin.sha = detail::field<std::string>(j.at("origin"), "sha", "origin");
    p.origin.path = detail::field<std::string>(j.at("origin"), "path", "origin");
  }
  return p;
}

std::string to_json_line(const FunctionPair& p) {
  return detail::dump_line({{"name", p.name},
                            {"before_tokens", p.before_tokens},
                            {"after_tokens", p.after_tokens},
                            {"origin", {{"sha", p.origin.sha}, {"path", p.origin.path}}}});
}

std::vector<FunctionPair> read_dataset(const std::string& path) {
  std::vector<FunctionPair> out;
  LineReader reader(path);
  std::size_t line_no = 0;
  while (auto line = reader.next()) {
    ++line_no;
    if (line->empty()) continue;
    try {
      out.push_back(parse_function_pair(*line));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> parse_string_array(std::string_view line) {
  const json j = detail::parse_record(line, "string array");
  if (!j.is_array()) throw DataError("expected a JSON array of strings");
  std::vector<std::string> out;
  for (const auto& item : j) {
    if (!item.is_string()) throw DataError("expected a JSON array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string to_json_array(const std::vector<std::string>& items) {
  return detail::dump_line(json(items));
}

}  // namespace patchforge

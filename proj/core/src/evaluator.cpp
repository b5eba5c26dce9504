#include "patchforge/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "json_util.hpp"
#include "patchforge/error.hpp"
#include "patchforge/io.hpp"

namespace patchforge {

using detail::json;

bool is_cve_id(std::string_view id) {
  if (id.size() < 13 || id.substr(0, 4) != "CVE-" || id[8] != '-') return false;
  auto digits = [](std::string_view s) {
    return !s.empty() &&
           std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
  };
  return digits(id.substr(4, 4)) && digits(id.substr(9));
}

namespace {

TokenSequence tokens_field(const json& j, const char* key, std::string_view what) {
  const json& arr = detail::array_field(j, key, what);
  TokenSequence out;
  for (const auto& t : arr) {
    if (!t.is_string()) throw DataError(std::string(what) + ": '" + key + "' holds a non-string");
    out.push_back(t.get<std::string>());
  }
  return out;
}

}  // namespace

VulnerabilityRecord parse_vulnerability(std::string_view line) {
  constexpr std::string_view what = "vulnerability record";
  const json j = detail::parse_record(line, what);
  VulnerabilityRecord r;
  r.cve_id = detail::field<std::string>(j, "cve_id", what);
  if (!is_cve_id(r.cve_id)) throw DataError("'" + r.cve_id + "' is not a CVE identifier");
  for (const auto& f : detail::array_field(j, "functions", what)) {
    VulnerableFunction fn;
    fn.name = detail::field<std::string>(f, "name", what);
    fn.path = detail::field<std::string>(f, "path", what);
    fn.before = tokens_field(f, "before_tokens", what);
    fn.after = tokens_field(f, "after_tokens", what);
    r.functions.push_back(std::move(fn));
  }
  if (r.functions.empty()) throw DataError(r.cve_id + " lists no functions");
  return r;
}

std::string to_json_line(const VulnerabilityRecord& record) {
  nlohmann::ordered_json j;
  j["cve_id"] = record.cve_id;
  j["functions"] = nlohmann::ordered_json::array();
  for (const auto& f : record.functions) {
    nlohmann::ordered_json fj;
    fj["name"] = f.name;
    fj["path"] = f.path;
    fj["before_tokens"] = f.before;
    fj["after_tokens"] = f.after;
    j["functions"].push_back(std::move(fj));
  }
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::vector<VulnerabilityRecord> merge_testset(std::vector<VulnerabilityRecord> records) {
  std::vector<VulnerabilityRecord> out;
  std::unordered_map<std::string, std::size_t> by_cve;
  for (auto& r : records) {
    auto [it, fresh] = by_cve.emplace(r.cve_id, out.size());
    if (fresh) out.push_back({r.cve_id, {}});
    auto& fns = out[it->second].functions;
    for (auto& f : r.functions) {
      auto same = std::find_if(fns.begin(), fns.end(), [&](const VulnerableFunction& g) {
        return g.path == f.path && g.name == f.name;
      });
      if (same == fns.end())
        fns.push_back(std::move(f));
      else
        same->after = std::move(f.after);
    }
  }
  return out;
}

std::vector<VulnerabilityRecord> read_testset(const std::filesystem::path& path) {
  std::vector<VulnerabilityRecord> records;
  LineReader reader(path);
  std::size_t n = 0;
  while (auto line = reader.next()) {
    ++n;
    if (line->find_first_not_of(" \t") == std::string::npos) continue;
    try {
      records.push_back(parse_vulnerability(*line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return merge_testset(std::move(records));
}

std::string to_string(const FunctionKey& key) {
  return key.cve_id + ":" + key.path + ":" + key.name;
}

PredictionRecord parse_prediction(std::string_view line) {
  constexpr std::string_view what = "prediction record";
  const json j = detail::parse_record(line, what);
  PredictionRecord r;
  if (!j.is_object() || !j.contains("origin")) throw DataError("prediction record: missing origin");
  const json& o = j.at("origin");
  r.origin.cve_id = detail::field<std::string>(o, "cve_id", what);
  r.origin.path = detail::field<std::string>(o, "path", what);
  r.origin.name = detail::field<std::string>(o, "name", what);
  r.rank = detail::field<int>(j, "rank", what);
  r.score = detail::field<double>(j, "score", what);
  r.tokens = tokens_field(j, "tokens", what);
  if (r.rank < 1) throw DataError("prediction record: rank must be at least 1");
  return r;
}

std::string to_json_line(const PredictionRecord& record) {
  nlohmann::ordered_json j;
  j["origin"] = {{"cve_id", record.origin.cve_id},
                 {"path", record.origin.path},
                 {"name", record.origin.name}};
  j["rank"] = record.rank;
  j["score"] = record.score;
  j["tokens"] = record.tokens;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

PredictionMap group_predictions(std::vector<PredictionRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const PredictionRecord& a, const PredictionRecord& b) {
                     if (a.origin != b.origin) return a.origin < b.origin;
                     return a.rank < b.rank;
                   });
  PredictionMap out;
  for (auto& r : records) out[r.origin].push_back(std::move(r.tokens));
  return out;
}

PredictionMap read_predictions(const std::filesystem::path& path) {
  std::vector<PredictionRecord> records;
  LineReader reader(path);
  std::size_t n = 0;
  while (auto line = reader.next()) {
    ++n;
    if (line->find_first_not_of(" \t") == std::string::npos) continue;
    try {
      records.push_back(parse_prediction(*line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return group_predictions(std::move(records));
}

std::optional<std::size_t> match_rank(const std::vector<TokenSequence>& predictions,
                                      const TokenSequence& truth) {
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == truth) return i + 1;
  return std::nullopt;
}

bool function_fixed(const std::vector<TokenSequence>& predictions, const TokenSequence& truth) {
  return match_rank(predictions, truth).has_value();
}

EvalReport evaluate(const std::vector<VulnerabilityRecord>& vulns,
                    const PredictionMap& predictions) {
  std::map<FunctionKey, bool> known;
  for (const auto& v : vulns)
    for (const auto& f : v.functions) known[{v.cve_id, f.path, f.name}] = true;
  for (const auto& [key, _] : predictions)
    if (!known.count(key))
      throw DataError("prediction for unknown function " + to_string(key));

  static const std::vector<TokenSequence> none;
  EvalReport report;
  for (const auto& v : vulns) {
    VulnerabilityVerdict vv;
    vv.cve_id = v.cve_id;
    std::size_t fixed = 0;
    for (const auto& f : v.functions) {
      auto it = predictions.find({v.cve_id, f.path, f.name});
      const auto& cands = it == predictions.end() ? none : it->second;
      FunctionVerdict fv{f.path, f.name, false, match_rank(cands, f.after), cands.size()};
      fv.fixed = fv.rank.has_value();
      fixed += fv.fixed;
      vv.functions.push_back(std::move(fv));
    }
    vv.partially_fixed = fixed > 0;
    vv.completely_fixed = !v.functions.empty() && fixed == v.functions.size();
    report.fixed_functions.count += fixed;
    report.fixed_functions.total += v.functions.size();
    report.partially_fixed.count += vv.partially_fixed;
    report.completely_fixed.count += vv.completely_fixed;
    report.vulnerabilities.push_back(std::move(vv));
  }
  report.partially_fixed.total = report.completely_fixed.total = vulns.size();
  return report;
}

std::string report_to_json(const EvalReport& report, std::string_view model_name) {
  using oj = nlohmann::ordered_json;
  auto ratio = [](const Ratio& r) {
    oj j;
    j["count"] = r.count;
    j["total"] = r.total;
    j["ratio"] = r.value();
    return j;
  };
  oj j;
  if (!model_name.empty()) j["model"] = std::string(model_name);
  j["fixed_functions"] = ratio(report.fixed_functions);
  j["partially_fixed"] = ratio(report.partially_fixed);
  j["completely_fixed"] = ratio(report.completely_fixed);
  j["vulnerabilities"] = oj::array();
  for (const auto& v : report.vulnerabilities) {
    oj vj;
    vj["cve_id"] = v.cve_id;
    vj["partially_fixed"] = v.partially_fixed;
    vj["completely_fixed"] = v.completely_fixed;
    vj["functions"] = oj::array();
    for (const auto& f : v.functions) {
      oj fj;
      fj["path"] = f.path;
      fj["name"] = f.name;
      fj["fixed"] = f.fixed;
      fj["rank"] = f.rank ? oj(*f.rank) : oj(nullptr);
      fj["candidates"] = f.candidates;
      vj["functions"].push_back(std::move(fj));
    }
    j["vulnerabilities"].push_back(std::move(vj));
  }
  return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

OovReport oov_analysis(const std::vector<TokenSequence>& predictions, const FixedVocab& vocab) {
  OovReport r;
  r.total = predictions.size();
  for (const auto& p : predictions) {
    const bool unknown = std::any_of(p.begin(), p.end(), [&](const std::string& t) {
      return t == FixedVocab::kUnknown || !vocab.contains(t);
    });
    r.with_unknown += unknown;
  }
  return r;
}

}  // namespace patchforge

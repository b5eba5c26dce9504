#include <doctest.h>

#include "json.hpp"
#include "patchforge/bpe.hpp"
#include "patchforge/error.hpp"
#include "patchforge/evaluator.hpp"
#include "patchforge/lexer.hpp"
#include "patchforge/tensor.hpp"

namespace pf = patchforge;
using pf::TokenSequence;

namespace {

pf::VulnerableFunction fn(const std::string& name, const std::string& after) {
  return {name, "src/" + name + ".c", pf::lex("int " + name + "(void) { return 0; }"),
          pf::lex(after)};
}

pf::FunctionKey key(const std::string& cve, const pf::VulnerableFunction& f) {
  return {cve, f.path, f.name};
}

// Three CVEs whose functions are fixed 2/2, 1/2 and 0/1.
struct Synthetic {
  std::vector<pf::VulnerabilityRecord> vulns;
  pf::PredictionMap preds;
};

Synthetic three_cves() {
  Synthetic s;
  s.vulns = {{"CVE-2018-1000", {fn("a", "return 1;"), fn("b", "return 2;")}},
             {"CVE-2018-2000", {fn("c", "return 3;"), fn("d", "return 4;")}},
             {"CVE-2018-3000", {fn("e", "return 5;")}}};
  const auto& v = s.vulns;
  s.preds[key(v[0].cve_id, v[0].functions[0])] = {pf::lex("return 9;"), pf::lex("return 1;")};
  s.preds[key(v[0].cve_id, v[0].functions[1])] = {pf::lex("return 2;")};
  s.preds[key(v[1].cve_id, v[1].functions[0])] = {pf::lex("return 3 ;")};
  s.preds[key(v[1].cve_id, v[1].functions[1])] = {pf::lex("return 5;")};
  s.preds[key(v[2].cve_id, v[2].functions[0])] = {};
  return s;
}

}  // namespace

TEST_CASE("cve ids") {
  CHECK(pf::is_cve_id("CVE-2011-1771"));
  CHECK(pf::is_cve_id("CVE-2021-1234567"));
  CHECK_FALSE(pf::is_cve_id("CVE-2011-177"));
  CHECK_FALSE(pf::is_cve_id("cve-2011-1771"));
  CHECK_FALSE(pf::is_cve_id("CVE-20x1-1771"));
  CHECK_FALSE(pf::is_cve_id("CVE-2011-1771a"));
}

TEST_CASE("membership") {
  std::vector<TokenSequence> preds(50, pf::lex("x = 0;"));
  const TokenSequence truth = pf::lex("x = 1;");
  preds[36] = truth;
  CHECK(pf::match_rank(preds, truth) == 37u);
  CHECK(pf::function_fixed(preds, truth));
  CHECK_FALSE(pf::function_fixed({}, truth));
}

TEST_CASE("formatting does not matter, tokens do") {
  const TokenSequence truth = pf::lex("if(x){y();}");
  CHECK(pf::function_fixed({pf::lex("if ( x )\n{\n\ty ( ) ;\n}")}, truth));
  CHECK_FALSE(pf::function_fixed({pf::lex("if (x) { z(); }")}, truth));
}

TEST_CASE("three cve report") {
  const auto s = three_cves();
  const auto r = pf::evaluate(s.vulns, s.preds);
  CHECK(r.fixed_functions == pf::Ratio{3, 5});
  CHECK(r.partially_fixed == pf::Ratio{2, 3});
  CHECK(r.completely_fixed == pf::Ratio{1, 3});
  CHECK(r.vulnerabilities[0].functions[0].rank == 2u);

  const auto j = nlohmann::json::parse(pf::report_to_json(r, "BPE_1000-d50"));
  CHECK(j["model"] == "BPE_1000-d50");
  CHECK(j["fixed_functions"]["count"] == 3);
  CHECK(j["fixed_functions"]["total"] == 5);
  CHECK(j["partially_fixed"]["ratio"].get<double>() == doctest::Approx(2.0 / 3));
  CHECK(j["vulnerabilities"].size() == 3);
  CHECK(j["vulnerabilities"][2]["functions"][0]["rank"].is_null());
  CHECK(pf::report_to_json(r, "m") == pf::report_to_json(pf::evaluate(s.vulns, s.preds), "m"));
}

TEST_CASE("one missing function leaves a vulnerability partial") {
  pf::VulnerabilityRecord big{"CVE-2011-1771", {}};
  pf::PredictionMap preds;
  for (int i = 0; i < 95; ++i) {
    auto f = fn("f" + std::to_string(i), "return " + std::to_string(i) + ";");
    if (i != 40) preds[key(big.cve_id, f)] = {f.after};
    big.functions.push_back(f);
  }
  const auto r = pf::evaluate({big}, preds);
  CHECK(r.fixed_functions == pf::Ratio{94, 95});
  CHECK(r.partially_fixed.count == 1);
  CHECK(r.completely_fixed.count == 0);
}

TEST_CASE("no predictions") {
  const auto s = three_cves();
  const auto r = pf::evaluate(s.vulns, {});
  CHECK(r.fixed_functions.count == 0);
  CHECK(r.partially_fixed.count == 0);
  CHECK(r.completely_fixed.count == 0);
}

TEST_CASE("a prediction for an unknown function is rejected") {
  auto s = three_cves();
  s.preds[{"CVE-2018-9999", "x.c", "x"}] = {};
  CHECK_THROWS_AS(pf::evaluate(s.vulns, s.preds), pf::DataError);
}

TEST_CASE("fuzzed reports keep their invariants") {
  pf::Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<pf::VulnerabilityRecord> vulns;
    pf::PredictionMap preds;
    const std::size_t n_cves = 1 + rng.below(6);
    for (std::size_t c = 0; c < n_cves; ++c) {
      pf::VulnerabilityRecord v{"CVE-2019-" + std::to_string(10000 + c), {}};
      const std::size_t n_fns = 1 + rng.below(5);
      for (std::size_t f = 0; f < n_fns; ++f) {
        auto func = fn("g" + std::to_string(f), "return " + std::to_string(rng.below(3)) + ";");
        std::vector<TokenSequence> cands;
        const std::size_t k = rng.below(4);
        for (std::size_t i = 0; i < k; ++i)
          cands.push_back(pf::lex("return " + std::to_string(rng.below(4)) + ";"));
        if (rng.below(3)) preds[key(v.cve_id, func)] = cands;
        v.functions.push_back(func);
      }
      vulns.push_back(v);
    }
    const auto r = pf::evaluate(vulns, preds);
    for (const auto& v : r.vulnerabilities) REQUIRE((!v.completely_fixed || v.partially_fixed));
    REQUIRE(r.completely_fixed.count <= r.partially_fixed.count);
    REQUIRE(r.partially_fixed.count <= r.fixed_functions.count);
    REQUIRE(r.partially_fixed.total == vulns.size());

    // Adding the correct answer somewhere never lowers a count.
    const auto& pick = vulns[rng.below(vulns.size())];
    const auto& target = pick.functions[rng.below(pick.functions.size())];
    auto more = preds;
    more[key(pick.cve_id, target)].push_back(target.after);
    const auto r2 = pf::evaluate(vulns, more);
    REQUIRE(r2.fixed_functions.count >= r.fixed_functions.count);
    REQUIRE(r2.partially_fixed.count >= r.partially_fixed.count);
    REQUIRE(r2.completely_fixed.count >= r.completely_fixed.count);
  }
}

TEST_CASE("test set merging keeps first before and last after") {
  auto f1 = fn("a", "return 1;");
  auto f2 = f1;
  f2.before = pf::lex("int a(void) { return 1; }");
  f2.after = pf::lex("return 2;");
  const auto merged = pf::merge_testset({{"CVE-2018-1000", {f1}},
                                         {"CVE-2018-2000", {fn("z", "z;")}},
                                         {"CVE-2018-1000", {f2, fn("b", "b;")}}});
  REQUIRE(merged.size() == 2);
  REQUIRE(merged[0].functions.size() == 2);
  CHECK(merged[0].functions[0].before == f1.before);
  CHECK(merged[0].functions[0].after == f2.after);
}

TEST_CASE("records round trip") {
  const auto s = three_cves();
  CHECK(pf::parse_vulnerability(pf::to_json_line(s.vulns[0])) == s.vulns[0]);
  CHECK_THROWS_AS(pf::parse_vulnerability(R"({"cve_id":"nope","functions":[]})"), pf::DataError);
  const pf::PredictionRecord p{{"CVE-2018-1000", "a.c", "a"}, 3, -1.5, {"x", ";"}};
  const auto back = pf::parse_prediction(pf::to_json_line(p));
  CHECK(back.origin == p.origin);
  CHECK(back.rank == 3);
  CHECK(back.tokens == p.tokens);
  const auto grouped = pf::group_predictions(
      {{p.origin, 2, 0, {"b"}}, {p.origin, 1, 0, {"a"}}, {p.origin, 3, 0, {"c"}}});
  CHECK(grouped.at(p.origin) == std::vector<TokenSequence>{{"a"}, {"b"}, {"c"}});
}

TEST_CASE("out of vocabulary share") {
  const pf::FixedVocab vocab({"x", "y", "=", ";"});
  std::vector<TokenSequence> preds;
  for (int i = 0; i < 3; ++i) preds.push_back({"x", "=", "y", ";"});
  for (int i = 0; i < 5; ++i) preds.push_back({"x", "=", "<unk>", ";"});
  for (int i = 0; i < 2; ++i) preds.push_back({"z", ";"});
  const auto r = pf::oov_analysis(preds, vocab);
  CHECK(r.with_unknown == 7);
  CHECK(r.ratio() == doctest::Approx(0.7));
  CHECK(pf::oov_analysis({{"x"}, {"y"}}, vocab).ratio() == 0.0);
  CHECK(pf::oov_analysis({{"<unk>"}, {"q"}}, vocab).ratio() == 1.0);
}

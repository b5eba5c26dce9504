// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances and budgets are the constants below.
#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "fixture_corpus.hpp"
#include "oracles.hpp"
#include "patchforge/bpe.hpp"
#include "patchforge/codec.hpp"
#include "patchforge/decoder.hpp"
#include "patchforge/evaluator.hpp"
#include "patchforge/extractor.hpp"
#include "patchforge/io.hpp"
#include "patchforge/lexer.hpp"
#include "patchforge/miner.hpp"
#include "patchforge/pipeline.hpp"
#include "patchforge/trainer.hpp"
#include "patchforge/utf8.hpp"
#include "synthetic.hpp"

namespace pf = patchforge;
namespace fs = std::filesystem;
using pf::TokenSequence;

namespace {

constexpr double kBpeBudgetSeconds = 120;
constexpr int kOracleCorpora = 24;
constexpr std::size_t kOracleMaxTokens = 1000;
constexpr std::size_t kFixedVocab = 200;
constexpr double kMinUnkShare = 0.5;
constexpr double kGradEps = 1e-4;
constexpr double kGradTolerance = 1e-3;
// Entries whose analytic and numeric gradients are both below this are
// compared absolutely against kGradTolerance * kGradFloor.
constexpr double kGradFloor = 1e-4;
constexpr int kCausalProbes = 100;
constexpr double kMemorizeAccuracy = 0.95;
constexpr double kMemorizeBudgetSeconds = 600;
constexpr int kBeamModels = 12;
constexpr int kFuzzedReports = 1000;
constexpr int kBeamWidth = 50;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::vector<int> with_eos(std::vector<int> ids) {
  ids.push_back(pf::kEosId);
  return ids;
}

pf::Transformer<float> to_float(const pf::Transformer<double>& m) {
  pf::Transformer<float> f(m.config());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& src = m.parameters()[i].value.storage();
    auto& dst = f.parameters()[i].value.storage();
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<float>(src[j]);
  }
  return f;
}

// Trains until the training loss falls below stop_loss; memorization runs
// score the training set itself.
pf::TrainOutcome memorize(pf::Transformer<float>& model, const std::vector<pf::Example>& data,
                          int epochs, double stop_loss) {
  pf::TrainOptions opt;
  opt.adam.lr = 1e-3;
  opt.epochs = epochs;
  opt.batch_size = 10;
  opt.validation_fraction = 0;
  opt.stop_loss = stop_loss;
  return pf::train(model, data, opt);
}

pf::ModelConfig memorizer_config(const pf::Codec& codec, const std::vector<pf::Example>& data) {
  std::size_t longest = 0;
  for (const auto& e : data) longest = std::max({longest, e.source.size(), e.target.size()});
  pf::ModelConfig c;
  c.vocab_size = static_cast<int>(codec.size());
  c.d_model = 64;
  c.n_heads = 4;
  c.n_layers = 2;
  c.d_ff = 256;
  c.max_positions = static_cast<int>(longest) + 16;
  return c;
}

// ---------------------------------------------------------------------------

Outcome bpe_losslessness() {
  const auto t0 = Clock::now();
  const auto corpus = pftest::function_corpus(10000, 2019);
  std::size_t bad = 0;
  std::string sizes;
  for (std::size_t target : {1000, 5000}) {
    const auto model = pf::train_bpe(corpus, target).model;
    for (const auto& f : corpus) bad += pf::decode(model.encode(f)) != f;
    sizes += " " + std::to_string(model.vocab_size());
  }
  const double t = seconds_since(t0);
  return {bad == 0 && t < kBpeBudgetSeconds,
          std::to_string(corpus.size()) + " functions, vocab" + sizes + ", " +
              std::to_string(bad) + " mismatches, " + fmt(t) + "s (budget " +
              fmt(kBpeBudgetSeconds) + "s)"};
}

Outcome bpe_oracle() {
  pf::Rng rng(31337);
  int agree = 0;
  std::size_t largest = 0;
  for (int trial = 0; trial < kOracleCorpora; ++trial) {
    std::vector<TokenSequence> corpus;
    std::size_t tokens = 0;
    if (trial % 2 == 0) {
      // Small alphabets give many tied counts.
      const std::size_t letters = 2 + rng.below(6);
      const std::size_t n = 20 + rng.below(kOracleMaxTokens - 20);
      corpus.emplace_back();
      for (std::size_t i = 0; i < n; ++i) {
        std::string tok;
        for (std::size_t j = 0, len = 1 + rng.below(7); j < len; ++j)
          tok += static_cast<char>('a' + rng.below(letters));
        corpus.back().push_back(tok);
      }
      tokens = n;
    } else {
      for (const auto& f : pftest::function_corpus(1 + rng.below(10), 500 + trial)) {
        if (tokens + f.size() > kOracleMaxTokens) break;
        corpus.push_back(f);
        tokens += f.size();
      }
    }
    std::set<std::string> units;
    for (const auto& s : corpus)
      for (const auto& t : s)
        for (const auto& u : pf::utf8::split(t)) units.insert(u);
    const std::size_t target = units.size() + 1 + rng.below(200);
    const auto got = pf::train_bpe(corpus, target);
    const auto want = pftest::brute_force_bpe(corpus, target);
    agree += got.model.merges() == want.merges && got.stopped_early == want.stopped_early;
    largest = std::max(largest, tokens);
  }
  return {agree == kOracleCorpora, std::to_string(agree) + "/" + std::to_string(kOracleCorpora) +
                                       " corpora identical, largest " + std::to_string(largest) +
                                       " tokens"};
}

Outcome vocab_sizes() {
  const auto corpus = pftest::function_corpus(10000, 2019);
  bool ok = true;
  std::string detail;
  for (std::size_t target : {1000, 5000, 10000}) {
    const auto t = pf::train_bpe(corpus, target);
    const bool exact = t.model.vocab_size() == target;
    ok &= exact || (t.stopped_early && !t.warning.empty());
    detail += std::to_string(t.model.vocab_size()) + "/" + std::to_string(target) + " ";
  }
  // A corpus too small for the target must say so.
  const std::vector<TokenSequence> tiny = {{"int", "main", "(", "void", ")"}};
  const auto small = pf::train_bpe(tiny, 1000);
  ok &= small.stopped_early && !small.warning.empty();
  detail += "tiny corpus: \"" + small.warning + "\"";
  return {ok, detail};
}

Outcome oov_mechanism() {
  const auto corpus = pftest::function_corpus(10000, 2019);
  const std::size_t half = corpus.size() / 2;
  const std::vector<TokenSequence> train(corpus.begin(), corpus.begin() + half);
  const std::vector<TokenSequence> held(corpus.begin() + half, corpus.end());
  const auto vocab = pf::build_fixed_vocab(train, kFixedVocab);
  std::size_t with_unk = 0;
  for (const auto& f : held) with_unk += vocab.encode(f).oov > 0;
  const auto codec = pf::Codec::from_bpe(pf::train_bpe(train, 1000).model);
  std::size_t bpe_unknown = 0;
  for (const auto& f : held) {
    const auto ids = codec.encode(f);
    bpe_unknown += static_cast<std::size_t>(std::count(ids.begin(), ids.end(), pf::kUnkId));
  }
  const double share = static_cast<double>(with_unk) / static_cast<double>(held.size());
  return {share >= kMinUnkShare && bpe_unknown == 0,
          "fixed top-" + std::to_string(kFixedVocab) + ": " + fmt(100 * share, 4) +
              "% of held-out functions contain <unk> (need >= " + fmt(100 * kMinUnkShare) +
              "%); BPE unknown pieces: " + std::to_string(bpe_unknown)};
}

Outcome gradient_check() {
  auto m = pftest::micro_model(16, 8, 1, 4242);
  const auto batch = pf::TrainingBatch::from(std::vector<pf::Example>{
      {{4, 5, 6, 7}, {8, 9, 10}}, {{11, 12}, {13, 14, 15, 4}}, {{6}, {}}});
  pf::loss_and_gradients(m, batch);
  double worst = 0;
  std::string worst_name;
  std::size_t entries = 0;
  for (std::size_t k = 0; k < m.parameters().size(); ++k) {
    const auto analytic = m.parameters()[k].grad;
    auto& values = m.parameters()[k].value.storage();
    for (std::size_t i = 0; i < values.size(); ++i, ++entries) {
      const double keep = values[i];
      values[i] = keep + kGradEps;
      const double up = pf::evaluate_loss(m, batch).loss;
      values[i] = keep - kGradEps;
      const double down = pf::evaluate_loss(m, batch).loss;
      values[i] = keep;
      const double numeric = (up - down) / (2 * kGradEps);
      const double a = analytic.storage()[i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradFloor});
      if (rel > worst) {
        worst = rel;
        worst_name = m.parameters()[k].name;
      }
    }
  }
  return {worst < kGradTolerance, std::to_string(m.parameters().size()) + " tensors, " +
                                      std::to_string(entries) + " entries, max relative error " +
                                      fmt(worst) + " (" + worst_name + ")"};
}

Outcome causality() {
  const auto m = to_float(pftest::micro_model(16, 16, 2, 99, 64));
  pf::Rng rng(5);
  int clean = 0;
  auto ids = [&](std::size_t n) {
    std::vector<int> v(n);
    for (auto& x : v) x = pf::kNumSpecial + static_cast<int>(rng.below(12));
    return v;
  };
  for (int probe = 0; probe < kCausalProbes; ++probe) {
    const auto src = ids(1 + rng.below(12));
    auto tgt = ids(2 + rng.below(14));
    tgt[0] = pf::kBosId;
    const std::size_t j = 1 + rng.below(tgt.size() - 1);
    auto changed = tgt;
    changed[j] = pf::kNumSpecial + static_cast<int>((tgt[j] - pf::kNumSpecial + 1 + rng.below(11)) % 12);
    const auto a = pf::forward(m, src, tgt);
    const auto b = pf::forward(m, src, changed);
    bool same = true;
    for (std::size_t i = 0; i < j; ++i)
      for (std::size_t c = 0; c < a.cols(); ++c) same &= a(i, c) == b(i, c);
    clean += same;
  }
  return {clean == kCausalProbes, std::to_string(clean) + "/" + std::to_string(kCausalProbes) +
                                      " probes bit-identical before the perturbed position"};
}

Outcome memorization() {
  const auto t0 = Clock::now();
  const auto pairs = pftest::edit_pairs(50, 50, 7);
  const auto codec = pf::build_codec(pairs, pf::VocabSpec::parse("bpe:1000")).codec;
  const auto data = pf::make_examples(pairs, codec);
  pf::Transformer<float> model(memorizer_config(codec, data));
  model.initialize(1);
  const auto outcome = memorize(model, data, 400, 0.02);
  const double accuracy = pf::greedy_accuracy(model, data);
  const double train_time = seconds_since(t0);
  // Every target greedy decoding reproduces must also top the beam.
  std::size_t memorized = 0, rank_one = 0;
  const pf::BeamConfig beam{kBeamWidth, model.config().max_positions, 0};
  for (const auto& e : data) {
    const auto src = with_eos(e.source);
    if (pf::greedy_decode(model, src, e.target.size() + 1).ids != e.target) continue;
    ++memorized;
    const auto r = pf::beam_search(model, src, beam);
    rank_one += !r.hypotheses.empty() && r.hypotheses[0].finished && r.hypotheses[0].ids == e.target;
  }
  return {accuracy >= kMemorizeAccuracy && train_time < kMemorizeBudgetSeconds &&
              rank_one == memorized,
          "greedy exact match " + fmt(100 * accuracy, 4) + "% after " +
              std::to_string(outcome.log.size()) + " epochs in " + fmt(train_time) +
              "s; beam-" + std::to_string(kBeamWidth) + " rank 1 for " +
              std::to_string(rank_one) + "/" + std::to_string(memorized) + " memorized"};
}

// Best finished score over every sequence of at most max_len steps.
double exhaustive_best(const pf::Transformer<double>& m, const std::vector<int>& source,
                       int max_len) {
  std::vector<int> symbols;
  for (int id = 0; id < m.config().vocab_size; ++id)
    if (pf::is_continuation(id) && id != pf::kEosId) symbols.push_back(id);
  double best = -INFINITY;
  std::vector<int> ids;
  std::function<void()> walk = [&] {
    std::vector<int> prefix = {pf::kBosId};
    prefix.insert(prefix.end(), ids.begin(), ids.end());
    const auto lp = pf::forward_log_probs(m, source, prefix);
    double s = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) s += lp(i, static_cast<std::size_t>(ids[i]));
    best = std::max(best, s + lp(ids.size(), pf::kEosId));
    if (static_cast<int>(ids.size()) + 1 >= max_len) return;
    for (int c : symbols) {
      ids.push_back(c);
      walk();
      ids.pop_back();
    }
  };
  walk();
  return best;
}

Outcome beam_exhaustive() {
  int exact = 0;
  for (int k = 0; k < kBeamModels; ++k) {
    // vocab_size 5 or 6 leaves 3 or 4 symbols a hypothesis can emit.
    const int vocab = 5 + k % 2;
    const int symbols = vocab - 2;
    const int max_len = k % 3 == 0 ? 5 : 4;
    const auto m = pftest::micro_model(vocab, 8, 1, 700 + static_cast<std::uint64_t>(k));
    const std::vector<int> src = {4, vocab - 1, 4, pf::kEosId};
    const int width = static_cast<int>(std::pow(symbols, max_len));
    const auto r = pf::beam_search(m, src, {width, max_len, 0});
    exact += !r.hypotheses.empty() && r.hypotheses[0].score == exhaustive_best(m, src, max_len);
  }
  return {exact == kBeamModels, std::to_string(exact) + "/" + std::to_string(kBeamModels) +
                                    " micro-models: top beam score equals the exhaustive maximum"};
}

Outcome evaluator() {
  auto fn = [](const std::string& name, const std::string& after) {
    return pf::VulnerableFunction{name, name + ".c", pf::lex("int " + name + "(void);"),
                                  pf::lex(after)};
  };
  const std::vector<pf::VulnerabilityRecord> vulns = {
      {"CVE-2018-1000", {fn("a", "a = 1;"), fn("b", "b = 1;")}},
      {"CVE-2018-2000", {fn("c", "c = 1;"), fn("d", "d = 1;")}},
      {"CVE-2018-3000", {fn("e", "e = 1;")}}};
  pf::PredictionMap preds;
  auto put = [&](std::size_t v, std::size_t f, std::vector<TokenSequence> c) {
    preds[{vulns[v].cve_id, vulns[v].functions[f].path, vulns[v].functions[f].name}] = std::move(c);
  };
  put(0, 0, {pf::lex("a = 2;"), pf::lex("a = 1;")});
  put(0, 1, {pf::lex("b=1;")});
  put(1, 0, {pf::lex("c = 1 ;")});
  put(1, 1, {pf::lex("d = 2;")});
  put(2, 0, {});
  const auto r = pf::evaluate(vulns, preds);
  bool ok = r.fixed_functions == pf::Ratio{3, 5} && r.partially_fixed == pf::Ratio{2, 3} &&
            r.completely_fixed == pf::Ratio{1, 3};
  std::string detail = "fixed " + std::to_string(r.fixed_functions.count) + "/" +
                       std::to_string(r.fixed_functions.total) + ", partial " +
                       std::to_string(r.partially_fixed.count) + "/" +
                       std::to_string(r.partially_fixed.total) + ", complete " +
                       std::to_string(r.completely_fixed.count) + "/" +
                       std::to_string(r.completely_fixed.total);

  pf::Rng rng(4);
  int held = 0;
  for (int trial = 0; trial < kFuzzedReports; ++trial) {
    std::vector<pf::VulnerabilityRecord> vs;
    pf::PredictionMap ps;
    for (std::size_t c = 0, n = 1 + rng.below(8); c < n; ++c) {
      pf::VulnerabilityRecord v{"CVE-2020-" + std::to_string(20000 + c), {}};
      for (std::size_t f = 0, m = 1 + rng.below(6); f < m; ++f) {
        auto func = fn("f" + std::to_string(f), "x = " + std::to_string(rng.below(3)) + ";");
        std::vector<TokenSequence> cands;
        for (std::size_t i = 0, k = rng.below(5); i < k; ++i)
          cands.push_back(pf::lex("x = " + std::to_string(rng.below(4)) + ";"));
        ps[{v.cve_id, func.path, func.name}] = cands;
        v.functions.push_back(func);
      }
      vs.push_back(v);
    }
    const auto fr = pf::evaluate(vs, ps);
    bool subset = fr.completely_fixed.count <= fr.partially_fixed.count;
    for (const auto& v : fr.vulnerabilities) subset &= !v.completely_fixed || v.partially_fixed;
    held += subset;
  }
  ok &= held == kFuzzedReports;
  return {ok, detail + "; complete within partial on " + std::to_string(held) + "/" +
                  std::to_string(kFuzzedReports) + " fuzzed reports"};
}

Outcome pipeline_determinism(const fs::path& workdir) {
  const fs::path fixtures = PATCHFORGE_FIXTURE_DIR;
  const auto config = pf::PipelineConfig::from_kv({{"bucket", "50"},
                                                   {"vocab", "bpe:1000"},
                                                   {"seed", "11"},
                                                   {"d_model", "32"},
                                                   {"n_layers", "1"},
                                                   {"epochs", "6"},
                                                   {"beam_width", "10"}});
  std::vector<std::string> reports;
  double slowest = 0;
  for (const char* run : {"run_a", "run_b"}) {
    const auto t0 = Clock::now();
    const fs::path dir = workdir / "determinism" / run;
    fs::remove_all(dir);
    pf::Pipeline p(config,
                   {fixtures / "corpus" / "events.jsonl", fixtures / "corpus" / "testset.jsonl", dir},
                   true);
    p.run_all();
    reports.push_back(pf::read_file(dir / "report.json"));
    slowest = std::max(slowest, seconds_since(t0));
  }
  const bool same = reports[0] == reports[1] && !reports[0].empty();
  return {same, std::string(same ? "identical" : "different") + " report.json (" +
                    std::to_string(reports[0].size()) + " bytes), slowest run " + fmt(slowest) +
                    "s"};
}

Outcome listing_fidelity() {
  const fs::path listings = fs::path(PATCHFORGE_FIXTURE_DIR) / "listings";
  struct Listing {
    const char* cve;
    const char* before;
    const char* after;
    const char* path;
    const char* function;
  };
  const Listing cases[] = {
      {"CVE-2011-1771", "cifs_file_before.c", "cifs_file_after.c", "fs/cifs/file.c", "cifs_close"},
      {"CVE-2017-8925", "omninet_before.c", "omninet_after.c", "drivers/usb/serial/omninet.c",
       "omninet_open"}};
  std::vector<pf::FunctionPair> listing_pairs;
  std::string detail;
  bool extracted = true;
  for (const auto& c : cases) {
    pf::CommitRecord rec;
    rec.commit.sha = std::string(40, '0');
    rec.commit.changed_files.push_back(
        {c.path, pf::read_file(listings / c.before), pf::read_file(listings / c.after)});
    const auto ex = pf::extract_commit(rec);
    const bool one = ex.pairs.size() == 1 && ex.pairs[0].name == c.function;
    extracted &= one;
    detail += std::string(c.function) + ": " + std::to_string(ex.pairs.size()) + " pair(s); ";
    if (one) listing_pairs.push_back(ex.pairs[0]);
  }
  if (!extracted) return {false, detail};

  const auto bucket = pf::LengthBucket::from_limit(100);
  auto pairs = pftest::edit_pairs(20, 100, 8658);
  pairs.insert(pairs.end(), listing_pairs.begin(), listing_pairs.end());
  pairs = pf::dedup_and_bucket(pairs, bucket);
  const auto codec = pf::build_codec(pairs, pf::VocabSpec::parse("bpe:1000")).codec;
  const auto data = pf::make_examples(pairs, codec);
  pf::Transformer<float> model(memorizer_config(codec, data));
  model.initialize(2);
  const auto outcome = memorize(model, data, 400, 0.02);
  int recovered = 0;
  for (const auto& p : listing_pairs) {
    const auto set = pf::predict_patches(model, codec, p.before_tokens,
                                         {kBeamWidth, model.config().max_positions, 0});
    std::vector<TokenSequence> cands;
    for (const auto& pr : set.predictions) cands.push_back(pr.tokens);
    const auto rank = pf::match_rank(cands, p.after_tokens);
    recovered += rank.has_value();
    detail += p.name + " fix at rank " + (rank ? std::to_string(*rank) : std::string("none")) + "; ";
  }
  detail += "trained " + std::to_string(outcome.log.size()) + " epochs on " +
            std::to_string(data.size()) + " pairs";
  return {recovered == 2, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patchforge acceptance suite"};
  fs::path workdir = fs::temp_directory_path() / "patchforge_acceptance";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory for pipeline runs");
  app.add_option("--only", only, "Run just these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const std::vector<Criterion> criteria = {
      {1, "bpe losslessness", bpe_losslessness},
      {2, "bpe oracle equivalence", bpe_oracle},
      {3, "exact vocabulary sizes", vocab_sizes},
      {4, "oov mechanism", oov_mechanism},
      {5, "gradient correctness", gradient_check},
      {6, "causality", causality},
      {7, "overfit memorization", memorization},
      {8, "beam vs exhaustive", beam_exhaustive},
      {9, "evaluator correctness", evaluator},
      {10, "pipeline determinism", [&] { return pipeline_determinism(workdir); }},
      {11, "listing fidelity", listing_fidelity},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << o.detail
              << " (" << fmt(seconds_since(t0)) << "s)" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

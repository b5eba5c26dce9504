#include "patchforge/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "json_util.hpp"
#include "patchforge/error.hpp"
#include "patchforge/io.hpp"
#include "patchforge/kvconfig.hpp"
#include "patchforge/parallel.hpp"
#include "patchforge/records.hpp"

namespace patchforge {

using ojson = nlohmann::ordered_json;

namespace {

template <class I>
I parse_int(const std::string& key, const std::string& v) {
  I out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("config '" + key + "': '" + v + "' is not an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("config '" + key + "': '" + v + "' is not a number");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

VocabSpec VocabSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw ConfigError("vocab must be bpe:N or fixed:K, got '" + std::string(text) + "'");
  const std::string kind(text.substr(0, colon)), num(text.substr(colon + 1));
  VocabSpec s;
  if (kind == "bpe") s.kind = Kind::bpe;
  else if (kind == "fixed") s.kind = Kind::fixed;
  else throw ConfigError("vocab kind must be 'bpe' or 'fixed', got '" + kind + "'");
  s.size = parse_int<std::size_t>("vocab", num);
  if (s.size == 0) throw ConfigError("vocab size must be positive");
  return s;
}

std::string VocabSpec::to_string() const {
  return (kind == Kind::bpe ? "bpe:" : "fixed:") + std::to_string(size);
}

std::string name_model(int bucket, const VocabSpec& vocab) {
  const LengthBucket b = LengthBucket::from_limit(bucket);
  const std::string d = "-d" + std::to_string(b.limit());
  if (vocab.kind == VocabSpec::Kind::fixed) return "Baseline" + d;
  return "BPE_" + std::to_string(vocab.size) + d;
}

PipelineConfig PipelineConfig::from_kv(const std::map<std::string, std::string>& kv) {
  PipelineConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "bucket") c.bucket = parse_int<int>(k, v);
    else if (k == "vocab") c.vocab = VocabSpec::parse(v);
    else if (k == "seed") c.seed = parse_int<std::uint64_t>(k, v);
    else if (k == "d_model") {
      c.d_model.clear();
      std::string_view rest = v;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        std::string item(rest.substr(0, comma));
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        c.d_model.push_back(parse_int<int>(k, item));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
      if (c.d_model.empty()) throw ConfigError("d_model needs at least one value");
    }
    else if (k == "n_layers") c.n_layers = parse_int<int>(k, v);
    else if (k == "n_heads") c.n_heads = parse_int<int>(k, v);
    else if (k == "d_ff") c.d_ff = parse_int<int>(k, v);
    else if (k == "max_positions") c.max_positions = parse_int<int>(k, v);
    else if (k == "dropout") c.dropout = parse_double(k, v);
    else if (k == "lr") c.train.adam.lr = parse_double(k, v);
    else if (k == "beta1") c.train.adam.beta1 = parse_double(k, v);
    else if (k == "beta2") c.train.adam.beta2 = parse_double(k, v);
    else if (k == "adam_eps") c.train.adam.eps = parse_double(k, v);
    else if (k == "clip_norm") c.train.adam.clip_norm = parse_double(k, v);
    else if (k == "epochs") c.train.epochs = parse_int<int>(k, v);
    else if (k == "batch_size") c.train.batch_size = parse_int<std::size_t>(k, v);
    else if (k == "validation_fraction") c.train.validation_fraction = parse_double(k, v);
    else if (k == "stop_loss") c.train.stop_loss = parse_double(k, v);
    else if (k == "stop_accuracy") c.train.stop_accuracy = parse_double(k, v);
    else if (k == "beam_width") c.beam.width = parse_int<int>(k, v);
    else if (k == "beam_max_len") c.beam.max_len = parse_int<int>(k, v);
    else if (k == "length_penalty") c.beam.length_penalty = parse_double(k, v);
    else if (k == "jobs") c.jobs = parse_int<int>(k, v);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  LengthBucket::from_limit(c.bucket);
  for (int d : c.d_model) {
    ModelConfig m;
    m.vocab_size = kNumSpecial + 1;
    m.d_model = d;
    m.n_heads = c.n_heads;
    m.n_layers = c.n_layers;
    m.d_ff = c.d_ff > 0 ? c.d_ff : 4 * d;
    m.max_positions = c.max_positions > 0 ? c.max_positions : 2;
    m.dropout = c.dropout;
    m.validate();
  }
  if (c.d_ff < 0 || c.max_positions < 0) throw ConfigError("d_ff and max_positions must be >= 0");
  if (c.train.epochs < 1 || c.train.batch_size < 1) throw ConfigError("epochs and batch_size must be positive");
  if (!(c.train.adam.lr >= 0)) throw ConfigError("lr must be non-negative");
  if (!(c.train.validation_fraction >= 0 && c.train.validation_fraction < 1))
    throw ConfigError("validation_fraction must be in [0, 1)");
  if (c.beam.width < 1) throw ConfigError("beam_width must be at least 1");
  if (c.beam.max_len < 0) throw ConfigError("beam_max_len must be >= 0");
  if (!(c.beam.length_penalty >= 0)) throw ConfigError("length_penalty must be non-negative");
  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  c.train.seed = c.seed;
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) { return from_kv(load_kv(path)); }

std::vector<std::pair<std::string, std::string>> PipelineConfig::echo() const {
  std::string dm;
  for (std::size_t i = 0; i < d_model.size(); ++i) dm += (i ? "," : "") + std::to_string(d_model[i]);
  const auto& a = train.adam;
  return {{"bucket", std::to_string(bucket)},
          {"vocab", vocab.to_string()},
          {"seed", std::to_string(seed)},
          {"d_model", dm},
          {"n_layers", std::to_string(n_layers)},
          {"n_heads", std::to_string(n_heads)},
          {"d_ff", std::to_string(d_ff)},
          {"max_positions", std::to_string(max_positions)},
          {"dropout", fmt(dropout)},
          {"lr", fmt(a.lr)},
          {"beta1", fmt(a.beta1)},
          {"beta2", fmt(a.beta2)},
          {"adam_eps", fmt(a.eps)},
          {"clip_norm", fmt(a.clip_norm)},
          {"epochs", std::to_string(train.epochs)},
          {"batch_size", std::to_string(train.batch_size)},
          {"validation_fraction", fmt(train.validation_fraction)},
          {"stop_loss", train.stop_loss ? fmt(*train.stop_loss) : "none"},
          {"stop_accuracy", train.stop_accuracy ? fmt(*train.stop_accuracy) : "none"},
          {"beam_width", std::to_string(beam.width)},
          {"beam_max_len", std::to_string(beam.max_len)},
          {"length_penalty", fmt(beam.length_penalty)},
          {"jobs", std::to_string(jobs)}};
}

// ---- stage bodies ----

void require_input(const fs::path& path, std::string_view producer) {
  if (!fs::exists(path))
    throw DataError("missing input '" + path.string() + "'; it is produced by the '" +
                    std::string(producer) + "' stage");
}

MineSummary mine_files(const std::vector<fs::path>& inputs, const fs::path& out, int jobs) {
  struct Part {
    std::string text;
    MineStats stats;
  };
  std::vector<Part> parts(inputs.size());
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    Part& part = parts[i];
    Miner miner([&](const CommitRecord& r) {
      part.text += to_json_line(r);
      part.text += '\n';
    });
    LineReader reader(inputs[i]);
    while (auto line = reader.next()) miner.process_line(*line);
    part.stats = miner.stats();
  });
  MineSummary summary;
  summary.files = inputs.size();
  auto os = open_output(out);
  for (const auto& p : parts) {
    os << p.text;
    summary.stats += p.stats;
  }
  if (!os) throw DataError("failed writing '" + out.string() + "'");
  return summary;
}

ExtractSummary extract_dataset(const fs::path& mined, LengthBucket bucket, const fs::path& out,
                               int jobs) {
  require_input(mined, "mine");
  std::vector<CommitRecord> commits;
  {
    LineReader reader(mined);
    std::size_t n = 0;
    while (auto line = reader.next()) {
      ++n;
      if (line->find_first_not_of(" \t") == std::string::npos) continue;
      try {
        commits.push_back(parse_commit_record(*line));
      } catch (const DataError& e) {
        throw DataError(mined.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }
  std::vector<CommitExtraction> parts(commits.size());
  parallel_for(commits.size(), jobs, [&](std::size_t i) { parts[i] = extract_commit(commits[i]); });

  ExtractSummary s;
  s.commits = commits.size();
  PairFilter filter(bucket);
  auto os = open_output(out);
  for (const auto& p : parts) {
    s.files_seen += p.files_seen;
    s.files_failed += p.files_failed;
    s.added += p.added;
    s.deleted += p.deleted;
    s.skipped_functions += p.skipped_functions;
    s.changed_pairs += p.pairs.size();
    for (const auto& pair : p.pairs) {
      if (!filter.admit(pair)) continue;
      os << to_json_line(pair) << '\n';
      ++s.written;
    }
  }
  s.duplicates = filter.duplicates();
  s.oversize = filter.oversize();
  if (!os) throw DataError("failed writing '" + out.string() + "'");
  return s;
}

std::vector<TokenSequence> dataset_corpus(const std::vector<FunctionPair>& pairs) {
  std::vector<TokenSequence> corpus;
  corpus.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    corpus.push_back(p.before_tokens);
    corpus.push_back(p.after_tokens);
  }
  return corpus;
}

CodecBuild build_codec(const std::vector<FunctionPair>& pairs, const VocabSpec& spec) {
  if (pairs.empty()) throw DataError("dataset is empty; nothing to build a vocabulary from");
  const auto corpus = dataset_corpus(pairs);
  if (spec.kind == VocabSpec::Kind::fixed)
    return {Codec::from_fixed(build_fixed_vocab(corpus, spec.size)), {}};
  BpeTraining t = train_bpe(corpus, spec.size);
  return {Codec::from_bpe(std::move(t.model)), t.warning};
}

void save_codec(const Codec& codec, const fs::path& path) {
  write_file(path, codec.is_bpe() ? codec.bpe()->serialize() : codec.fixed()->serialize());
}

std::vector<Example> make_examples(const std::vector<FunctionPair>& pairs, const Codec& codec) {
  std::vector<Example> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({codec.encode(p.before_tokens), codec.encode(p.after_tokens)});
  return out;
}

TrainSummary train_model(const std::vector<FunctionPair>& pairs, const Codec& codec,
                         const PipelineConfig& config, const fs::path& checkpoint,
                         const Logger& log) {
  std::vector<Example> all = make_examples(pairs, codec);
  if (all.empty()) throw DataError("dataset is empty; nothing to train on");
  TrainSummary summary;
  std::size_t longest = 0;
  for (const auto& e : all) longest = std::max({longest, e.source.size() + 1, e.target.size() + 1});
  const std::size_t positions =
      config.max_positions > 0 ? static_cast<std::size_t>(config.max_positions) : longest + 16;
  std::vector<Example> examples;
  for (auto& e : all) {
    if (e.source.size() + 1 > positions || e.target.size() + 1 > positions) {
      ++summary.dropped_long;
      continue;
    }
    examples.push_back(std::move(e));
  }
  if (examples.empty()) throw DataError("every example exceeds max_positions");

  std::optional<Transformer<float>> best;
  double best_acc = -1;
  for (int d : config.d_model) {
    ModelConfig mc;
    mc.vocab_size = static_cast<int>(codec.size());
    mc.d_model = d;
    mc.n_heads = config.n_heads;
    mc.n_layers = config.n_layers;
    mc.d_ff = config.d_ff > 0 ? config.d_ff : 4 * d;
    mc.max_positions = static_cast<int>(positions);
    mc.dropout = config.dropout;
    Transformer<float> model(mc);
    model.initialize(config.seed);
    TrainOptions opts = config.train;
    opts.seed = config.seed;
    const TrainOutcome outcome = train(model, examples, opts, [&](const EpochLog& e) {
      if (log)
        log("d_model=" + std::to_string(d) + " epoch " + std::to_string(e.epoch) +
            " train_loss=" + fmt(e.train_loss) + " val_loss=" + fmt(e.val_loss) +
            " val_accuracy=" + fmt(e.val_accuracy));
    });
    summary.sweep.emplace_back(d, outcome.best_accuracy);
    if (outcome.diverged && log) log("d_model=" + std::to_string(d) + " diverged; kept best snapshot");
    if (outcome.best_accuracy > best_acc) {
      best_acc = outcome.best_accuracy;
      best = std::move(model);
      summary.outcome = outcome;
      summary.config = mc;
    }
  }
  Checkpoint info;
  info.codec_fingerprint = codec.fingerprint();
  info.metadata["model"] = name_model(config.bucket, config.vocab);
  info.metadata["best_epoch"] = std::to_string(summary.outcome.best_epoch);
  info.metadata["seed"] = std::to_string(config.seed);
  save_checkpoint(checkpoint, *best, info);
  return summary;
}

std::vector<VulnerabilityRecord> restrict_to_bucket(const std::vector<VulnerabilityRecord>& vulns,
                                                    LengthBucket bucket) {
  const auto limit = static_cast<std::size_t>(bucket.limit());
  std::vector<VulnerabilityRecord> out;
  for (const auto& v : vulns) {
    VulnerabilityRecord r{v.cve_id, {}};
    for (const auto& f : v.functions)
      if (f.before.size() <= limit && f.after.size() <= limit) r.functions.push_back(f);
    if (!r.functions.empty()) out.push_back(std::move(r));
  }
  return out;
}

PredictSummary predict_testset(const std::vector<VulnerabilityRecord>& vulns,
                               const Transformer<float>& model, const Codec& codec,
                               const BeamConfig& beam_in, int jobs, const fs::path& out) {
  BeamConfig beam = beam_in;
  if (beam.max_len == 0) beam.max_len = model.config().max_positions;
  beam.validate(model.config());
  struct Item {
    const VulnerabilityRecord* vuln;
    const VulnerableFunction* fn;
  };
  std::vector<Item> items;
  for (const auto& v : vulns)
    for (const auto& f : v.functions) items.push_back({&v, &f});

  struct Result {
    PredictionSet set;
    bool too_long = false;
  };
  std::vector<Result> results(items.size());
  const auto limit = static_cast<std::size_t>(model.config().max_positions);
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    if (encoder_input(codec, items[i].fn->before).size() > limit) {
      results[i].too_long = true;
      return;
    }
    results[i].set = predict_patches(model, codec, items[i].fn->before, beam);
  });

  PredictSummary s;
  s.functions = items.size();
  auto os = open_output(out);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Result& r = results[i];
    if (r.too_long) {
      ++s.skipped_long;
      continue;
    }
    s.undecodable += r.set.undecodable;
    s.truncated += r.set.truncated;
    int rank = 0;
    for (const auto& p : r.set.predictions) {
      PredictionRecord rec{{items[i].vuln->cve_id, items[i].fn->path, items[i].fn->name},
                           ++rank, p.score, p.tokens};
      os << to_json_line(rec) << '\n';
      ++s.predictions;
    }
  }
  if (!os) throw DataError("failed writing '" + out.string() + "'");
  return s;
}

// ---- runner ----

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::mine: return "mine";
    case Stage::extract: return "extract";
    case Stage::bpe: return "bpe";
    case Stage::train: return "train";
    case Stage::predict: return "predict";
    case Stage::evaluate: return "evaluate";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : kAllStages)
    if (to_string(s) == name) return s;
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

Pipeline::Pipeline(PipelineConfig config, PipelinePaths paths, bool force, Logger log)
    : config_(std::move(config)), paths_(std::move(paths)), force_(force), log_(std::move(log)) {}

std::vector<fs::path> Pipeline::inputs(Stage stage) const {
  switch (stage) {
    case Stage::mine: return expand_inputs(paths_.archive);
    case Stage::extract: return {paths_.mined()};
    case Stage::bpe: return {paths_.dataset()};
    case Stage::train: return {paths_.dataset(), paths_.codec()};
    case Stage::predict: return {paths_.testset, paths_.checkpoint(), paths_.codec()};
    case Stage::evaluate: return {paths_.testset, paths_.predictions()};
  }
  return {};
}

std::vector<fs::path> Pipeline::outputs(Stage stage) const {
  switch (stage) {
    case Stage::mine: return {paths_.mined()};
    case Stage::extract: return {paths_.dataset()};
    case Stage::bpe: return {paths_.codec()};
    case Stage::train: return {paths_.checkpoint()};
    case Stage::predict: return {paths_.predictions()};
    case Stage::evaluate: return {paths_.report()};
  }
  return {};
}

std::string Pipeline::fingerprint(Stage stage) const {
  std::uint64_t h = fnv1a(to_string(stage));
  for (const auto& [k, v] : config_.echo()) h = fnv1a(k + "=" + v + "\n", h);
  for (const auto& in : inputs(stage)) {
    h = fnv1a(in.string(), h);
    h = fnv1a(read_file(in), h);
  }
  return hex64(h);
}

namespace {

const char* producer(Stage consumer, const fs::path& missing, const PipelinePaths& p) {
  if (missing == p.mined()) return "mine";
  if (missing == p.dataset()) return "extract";
  if (missing == p.codec()) return "bpe";
  if (missing == p.checkpoint()) return "train";
  if (missing == p.predictions()) return "predict";
  (void)consumer;
  return nullptr;
}

}  // namespace

StageResult Pipeline::run(Stage stage) {
  if (stage == Stage::mine && !fs::exists(paths_.archive))
    throw DataError("event archive '" + paths_.archive.string() + "' not found");
  for (const auto& in : inputs(stage)) {
    if (fs::exists(in)) continue;
    if (const char* who = producer(stage, in, paths_)) require_input(in, who);
    throw DataError("missing input '" + in.string() + "'");
  }

  StageResult result{stage, false, paths_.stage_report(stage)};
  const std::string fp = fingerprint(stage);
  if (!force_ && fs::exists(result.report)) {
    bool outputs_present = true;
    for (const auto& o : outputs(stage)) outputs_present = outputs_present && fs::exists(o);
    if (outputs_present) {
      try {
        const auto j = detail::parse_record(read_file(result.report), "stage report");
        if (j.value("fingerprint", std::string()) == fp) {
          result.skipped = true;
          if (log_) log_(std::string(to_string(stage)) + ": up to date, skipped");
          return result;
        }
      } catch (const DataError&) {
      }
    }
  }

  if (log_) log_(std::string(to_string(stage)) + ": running");
  const auto t0 = std::chrono::steady_clock::now();
  const LengthBucket bucket = LengthBucket::from_limit(config_.bucket);
  ojson counts;
  switch (stage) {
    case Stage::mine: {
      const MineSummary s = mine_files(inputs(stage), paths_.mined(), config_.jobs);
      counts["files"] = s.files;
      counts["records_read"] = s.stats.records_read;
      counts["malformed_skipped"] = s.stats.malformed_skipped;
      counts["events_scanned"] = s.stats.events_scanned;
      counts["commits_scanned"] = s.stats.commits_scanned;
      counts["bugfix_commits"] = s.stats.bugfix_commits;
      counts["commits_retained"] = s.stats.commits_retained;
      break;
    }
    case Stage::extract: {
      const ExtractSummary s = extract_dataset(paths_.mined(), bucket, paths_.dataset(), config_.jobs);
      counts["commits"] = s.commits;
      counts["files_seen"] = s.files_seen;
      counts["files_failed"] = s.files_failed;
      counts["changed_pairs"] = s.changed_pairs;
      counts["added_functions"] = s.added;
      counts["deleted_functions"] = s.deleted;
      counts["skipped_functions"] = s.skipped_functions;
      counts["duplicates"] = s.duplicates;
      counts["oversize"] = s.oversize;
      counts["pairs_written"] = s.written;
      break;
    }
    case Stage::bpe: {
      const auto pairs = read_dataset(paths_.dataset().string());
      const CodecBuild b = build_codec(pairs, config_.vocab);
      save_codec(b.codec, paths_.codec());
      counts["pairs"] = pairs.size();
      counts["symbols"] = b.codec.size();
      if (b.codec.is_bpe()) {
        counts["merges"] = b.codec.bpe()->merges().size();
        counts["vocab_size"] = b.codec.bpe()->vocab_size();
      } else {
        counts["vocab_size"] = b.codec.fixed()->tokens().size();
      }
      counts["warning"] = b.warning;
      if (!b.warning.empty() && log_) log_("bpe: " + b.warning);
      break;
    }
    case Stage::train: {
      const auto pairs = read_dataset(paths_.dataset().string());
      const Codec codec = Codec::load(paths_.codec());
      const TrainSummary s = train_model(pairs, codec, config_, paths_.checkpoint(), log_);
      counts["examples"] = pairs.size();
      counts["dropped_long"] = s.dropped_long;
      counts["train_examples"] = s.outcome.train_examples;
      counts["validation_examples"] = s.outcome.validation_examples;
      counts["d_model"] = s.config.d_model;
      counts["max_positions"] = s.config.max_positions;
      counts["vocab_size"] = s.config.vocab_size;
      counts["epochs_run"] = s.outcome.log.size();
      counts["best_epoch"] = s.outcome.best_epoch;
      counts["best_validation_accuracy"] = s.outcome.best_accuracy;
      counts["diverged"] = s.outcome.diverged;
      ojson sweep = ojson::array();
      for (const auto& [d, acc] : s.sweep) sweep.push_back({{"d_model", d}, {"accuracy", acc}});
      counts["sweep"] = sweep;
      ojson epochs = ojson::array();
      for (const auto& e : s.outcome.log)
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_loss", e.val_loss},
                          {"val_accuracy", e.val_accuracy}});
      counts["log"] = epochs;
      break;
    }
    case Stage::predict: {
      const auto vulns = restrict_to_bucket(read_testset(paths_.testset), bucket);
      const Codec codec = Codec::load(paths_.codec());
      const LoadedCheckpoint ck = load_checkpoint(paths_.checkpoint());
      if (ck.info.codec_fingerprint != codec.fingerprint())
        throw DataError("checkpoint was trained with a different vocabulary than " +
                        paths_.codec().string());
      const PredictSummary s =
          predict_testset(vulns, ck.model, codec, config_.beam, config_.jobs, paths_.predictions());
      counts["vulnerabilities"] = vulns.size();
      counts["functions"] = s.functions;
      counts["predictions"] = s.predictions;
      counts["undecodable"] = s.undecodable;
      counts["truncated"] = s.truncated;
      counts["skipped_long"] = s.skipped_long;
      break;
    }
    case Stage::evaluate: {
      const auto vulns = restrict_to_bucket(read_testset(paths_.testset), bucket);
      const auto preds = read_predictions(paths_.predictions());
      const EvalReport r = evaluate(vulns, preds);
      write_file(paths_.report(), report_to_json(r, name_model(config_.bucket, config_.vocab)));
      counts["fixed_functions"] = r.fixed_functions.count;
      counts["functions"] = r.fixed_functions.total;
      counts["partially_fixed"] = r.partially_fixed.count;
      counts["completely_fixed"] = r.completely_fixed.count;
      counts["vulnerabilities"] = r.partially_fixed.total;
      break;
    }
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ojson report;
  report["stage"] = std::string(to_string(stage));
  report["fingerprint"] = fp;
  ojson cfg;
  for (const auto& [k, v] : config_.echo()) cfg[k] = v;
  report["config"] = cfg;
  ojson ins = ojson::array();
  for (const auto& in : inputs(stage))
    ins.push_back({{"path", in.string()}, {"fnv1a", hex64(fnv1a(read_file(in)))}});
  report["inputs"] = ins;
  ojson outs = ojson::array();
  for (const auto& o : outputs(stage)) outs.push_back(o.string());
  report["outputs"] = outs;
  report["counts"] = counts;
  report["duration_seconds"] = seconds;
  write_file(result.report, report.dump(2, ' ', false, detail::json::error_handler_t::replace) + "\n");
  if (log_) log_(std::string(to_string(stage)) + ": done in " + fmt(seconds) + " s");
  return result;
}

std::vector<StageResult> Pipeline::run_all() {
  std::vector<StageResult> out;
  for (Stage s : kAllStages) out.push_back(run(s));
  return out;
}

}  // namespace patchforge

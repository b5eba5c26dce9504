#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchforge/checkpoint.hpp"
#include "patchforge/codec.hpp"
#include "patchforge/decoder.hpp"
#include "patchforge/evaluator.hpp"
#include "patchforge/extractor.hpp"
#include "patchforge/miner.hpp"
#include "patchforge/trainer.hpp"

namespace patchforge {

namespace fs = std::filesystem;
using Logger = std::function<void(const std::string&)>;

struct VocabSpec {
  enum class Kind { bpe, fixed };
  Kind kind = Kind::bpe;
  std::size_t size = 1000;

  // "bpe:N" or "fixed:K"; throws ConfigError.
  static VocabSpec parse(std::string_view text);
  std::string to_string() const;
  bool operator==(const VocabSpec&) const = default;
};

// "BPE_1000-d200" or "Baseline-d50". Throws ConfigError on a bad bucket.
std::string name_model(int bucket, const VocabSpec& vocab);

struct PipelineConfig {
  int bucket = 50;
  VocabSpec vocab;
  std::uint64_t seed = 1;
  std::vector<int> d_model{64, 128};  // sweep; the best validation accuracy wins
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 0;          // 0 means 4 * d_model
  int max_positions = 0; // 0 sizes the table from the training data
  double dropout = 0.1;
  TrainOptions train;
  BeamConfig beam{50, 0, 0};  // max_len 0 means the model's max_positions
  int jobs = 1;

  // Unknown keys and out-of-range values throw ConfigError.
  static PipelineConfig from_kv(const std::map<std::string, std::string>& kv);
  static PipelineConfig load(const fs::path& path);
  // Every effective setting, defaults included, in a stable order.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

// ---- Stage bodies, shared by the subcommands and the pipeline runner ----

struct MineSummary {
  MineStats stats;
  std::size_t files = 0;
};
MineSummary mine_files(const std::vector<fs::path>& inputs, const fs::path& out, int jobs);

struct ExtractSummary {
  std::size_t commits = 0;
  std::size_t files_seen = 0;
  std::size_t files_failed = 0;
  std::size_t changed_pairs = 0;
  std::size_t added = 0;
  std::size_t deleted = 0;
  std::size_t skipped_functions = 0;
  std::size_t duplicates = 0;
  std::size_t oversize = 0;
  std::size_t written = 0;
};
ExtractSummary extract_dataset(const fs::path& mined, LengthBucket bucket, const fs::path& out,
                               int jobs);

// Token corpus of a dataset: every before and after sequence.
std::vector<TokenSequence> dataset_corpus(const std::vector<FunctionPair>& pairs);

struct CodecBuild {
  Codec codec;
  std::string warning;
};
CodecBuild build_codec(const std::vector<FunctionPair>& pairs, const VocabSpec& spec);
void save_codec(const Codec& codec, const fs::path& path);

std::vector<Example> make_examples(const std::vector<FunctionPair>& pairs, const Codec& codec);

struct TrainSummary {
  ModelConfig config;
  TrainOutcome outcome;
  std::vector<std::pair<int, double>> sweep;  // d_model, best validation accuracy
  std::size_t dropped_long = 0;
};
TrainSummary train_model(const std::vector<FunctionPair>& pairs, const Codec& codec,
                         const PipelineConfig& config, const fs::path& checkpoint,
                         const Logger& log = {});

struct PredictSummary {
  std::size_t functions = 0;
  std::size_t predictions = 0;
  std::size_t undecodable = 0;
  std::size_t truncated = 0;
  std::size_t skipped_long = 0;
};
PredictSummary predict_testset(const std::vector<VulnerabilityRecord>& vulns,
                               const Transformer<float>& model, const Codec& codec,
                               const BeamConfig& beam, int jobs, const fs::path& out);

// Keeps functions whose before and after both fit the bucket; drops CVEs
// left without functions.
std::vector<VulnerabilityRecord> restrict_to_bucket(const std::vector<VulnerabilityRecord>& vulns,
                                                    LengthBucket bucket);

// Throws DataError naming the artifact and the stage that writes it.
void require_input(const fs::path& path, std::string_view producer);

// ---- Pipeline runner ----

enum class Stage { mine, extract, bpe, train, predict, evaluate };
inline constexpr Stage kAllStages[] = {Stage::mine,  Stage::extract, Stage::bpe,
                                       Stage::train, Stage::predict, Stage::evaluate};
std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);

struct PipelinePaths {
  fs::path archive;  // push-event file or directory
  fs::path testset;
  fs::path workdir;

  fs::path mined() const { return workdir / "mined.jsonl"; }
  fs::path dataset() const { return workdir / "dataset.jsonl"; }
  fs::path codec() const { return workdir / "codec.txt"; }
  fs::path checkpoint() const { return workdir / "model.ckpt"; }
  fs::path predictions() const { return workdir / "predictions.jsonl"; }
  fs::path report() const { return workdir / "report.json"; }
  fs::path stage_report(Stage s) const {
    return workdir / "reports" / (std::string(to_string(s)) + ".json");
  }
};

struct StageResult {
  Stage stage;
  bool skipped = false;  // inputs and config unchanged since the last run
  fs::path report;
};

class Pipeline {
 public:
  Pipeline(PipelineConfig config, PipelinePaths paths, bool force = false, Logger log = {});

  StageResult run(Stage stage);
  std::vector<StageResult> run_all();

 private:
  std::vector<fs::path> inputs(Stage stage) const;
  std::vector<fs::path> outputs(Stage stage) const;
  std::string fingerprint(Stage stage) const;

  PipelineConfig config_;
  PipelinePaths paths_;
  bool force_;
  Logger log_;
};

}  // namespace patchforge

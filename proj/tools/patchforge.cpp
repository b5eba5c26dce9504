#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "patchforge/bpe.hpp"
#include "patchforge/codec.hpp"
#include "patchforge/error.hpp"
#include "patchforge/extractor.hpp"
#include "patchforge/io.hpp"
#include "patchforge/kvconfig.hpp"
#include "patchforge/lexer.hpp"
#include "patchforge/pipeline.hpp"
#include "patchforge/records.hpp"

namespace pf = patchforge;
namespace fs = std::filesystem;

namespace {

void log_line(const std::string& msg) { std::cerr << "patchforge: " << msg << '\n'; }

void write_stats(const std::string& path, const std::map<std::string, std::size_t>& counts) {
  if (path.empty()) return;
  std::string out = "{\n";
  std::size_t i = 0;
  for (const auto& [k, v] : counts)
    out += "  \"" + k + "\": " + std::to_string(v) + (++i < counts.size() ? ",\n" : "\n");
  out += "}\n";
  pf::write_file(path, out);
}

pf::PipelineConfig load_config(const std::string& path) {
  return path.empty() ? pf::PipelineConfig::from_kv({}) : pf::PipelineConfig::load(path);
}

// Runs `fn` over every non-blank line of `in` (stdin for "-"), writing to
// `out` (stdout for "-").
template <class Fn>
void map_lines(const std::string& in, const std::string& out, Fn&& fn) {
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (out != "-") {
    file = pf::open_output(out);
    os = &file;
  }
  auto handle = [&](const std::string& line) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) *os << fn(line) << '\n';
  };
  if (in == "-") {
    std::string line;
    while (std::getline(std::cin, line)) handle(line);
  } else {
    pf::LineReader reader(in);
    while (auto line = reader.next()) handle(*line);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patchforge: learn to patch vulnerable C functions from bug-fix commits"};
  app.require_subcommand(1);

  // mine
  auto* mine = app.add_subcommand("mine", "select bug-fix commits touching .c files");
  std::string mine_in, mine_out, mine_stats;
  int jobs = 1;
  mine->add_option("--in", mine_in, "event archive file or directory")->required();
  mine->add_option("--out", mine_out, "retained commits (JSONL)")->required();
  mine->add_option("--stats", mine_stats, "write counts as JSON");
  mine->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  // extract
  auto* extract = app.add_subcommand("extract", "build a function-pair dataset");
  std::string ex_in, ex_out, ex_stats;
  int bucket = 50;
  extract->add_option("--in", ex_in, "mined commits")->required();
  extract->add_option("--bucket", bucket, "token limit: 50, 100 or 200")->required();
  extract->add_option("--out", ex_out, "dataset (JSONL)")->required();
  extract->add_option("--stats", ex_stats, "write counts as JSON");
  extract->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  // lex
  auto* lex = app.add_subcommand("lex", "print the tokens of a C file, one per line");
  std::string lex_in;
  bool keep_comments = false;
  lex->add_option("--in", lex_in, "C source file")->required();
  lex->add_flag("--no-strip", keep_comments, "do not strip comments first");

  // bpe
  auto* bpe = app.add_subcommand("bpe", "subword vocabularies");
  bpe->require_subcommand(1);
  auto* bpe_train = bpe->add_subcommand("train", "learn BPE merges from a dataset");
  std::string bt_in, bt_out;
  std::size_t vocab_size = 1000;
  bpe_train->add_option("--in", bt_in, "dataset (JSONL)")->required();
  bpe_train->add_option("--vocab-size", vocab_size, "target vocabulary size")->required();
  bpe_train->add_option("--out", bt_out, "model file")->required();
  auto* bpe_fixed = bpe->add_subcommand("fixed", "build the top-K whole-token vocabulary");
  std::string bf_in, bf_out;
  std::size_t top_k = 50000;
  bpe_fixed->add_option("--in", bf_in, "dataset (JSONL)")->required();
  bpe_fixed->add_option("--size", top_k, "K");
  bpe_fixed->add_option("--out", bf_out, "vocabulary file")->required();
  std::string codec_path, io_in = "-", io_out = "-";
  auto* bpe_encode = bpe->add_subcommand("encode", "token arrays to piece arrays (JSONL)");
  bpe_encode->add_option("--model", codec_path, "BPE model or fixed vocabulary")->required();
  bpe_encode->add_option("--in", io_in, "input, '-' for stdin");
  bpe_encode->add_option("--out", io_out, "output, '-' for stdout");
  auto* bpe_decode = bpe->add_subcommand("decode", "piece arrays to token arrays (JSONL)");
  bpe_decode->add_option("--model", codec_path, "BPE model")->required();
  bpe_decode->add_option("--in", io_in, "input, '-' for stdin");
  bpe_decode->add_option("--out", io_out, "output, '-' for stdout");

  // train
  auto* train = app.add_subcommand("train", "train a transformer on a dataset");
  std::string tr_data, tr_codec, tr_config, tr_out;
  train->add_option("--dataset", tr_data, "dataset (JSONL)")->required();
  train->add_option("--bpe", tr_codec, "BPE model or fixed vocabulary")->required();
  train->add_option("--config", tr_config, "key=value config file");
  train->add_option("--out", tr_out, "checkpoint")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "beam-search patches for a test set");
  std::string pr_ckpt, pr_codec, pr_in, pr_out;
  int beam_width = 50, max_len = 0;
  double penalty = 0;
  predict->add_option("--ckpt", pr_ckpt, "checkpoint")->required();
  predict->add_option("--bpe", pr_codec, "BPE model or fixed vocabulary")->required();
  predict->add_option("--in", pr_in, "vulnerable functions (test-set JSONL)")->required();
  predict->add_option("--beam", beam_width, "beam width")->check(CLI::PositiveNumber);
  predict->add_option("--max-len", max_len, "output limit; 0 uses max_positions");
  predict->add_option("--length-penalty", penalty, "GNMT alpha; 0 disables");
  predict->add_option("--out", pr_out, "predictions (JSONL)")->required();
  predict->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against human fixes");
  std::string ev_truth, ev_pred, ev_report, ev_name;
  evaluate->add_option("--truth", ev_truth, "test set (JSONL)")->required();
  evaluate->add_option("--pred", ev_pred, "predictions (JSONL)")->required();
  evaluate->add_option("--report", ev_report, "report (JSON)")->required();
  evaluate->add_option("--name", ev_name, "model name to record");

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "run mine .. evaluate end to end");
  std::string pl_config, pl_in, pl_testset, pl_workdir;
  std::vector<std::string> pl_stages;
  bool force = false;
  pipeline->add_option("--config", pl_config, "key=value config file");
  pipeline->add_option("--in", pl_in, "event archive file or directory")->required();
  pipeline->add_option("--testset", pl_testset, "test set (JSONL)")->required();
  pipeline->add_option("--workdir", pl_workdir, "artifact directory")->required();
  pipeline->add_option("--stage", pl_stages, "run only these stages, in order");
  pipeline->add_flag("--force", force, "rerun stages even when up to date");
  pipeline->add_option("--jobs", jobs, "worker threads, overrides the config")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(pf::ExitCode::usage);
  }

  try {
    if (*mine) {
      if (!fs::exists(mine_in)) throw pf::DataError("event archive '" + mine_in + "' not found");
      const auto s = pf::mine_files(pf::expand_inputs(mine_in), mine_out, jobs);
      write_stats(mine_stats, {{"files", s.files},
                               {"records_read", s.stats.records_read},
                               {"malformed_skipped", s.stats.malformed_skipped},
                               {"events_scanned", s.stats.events_scanned},
                               {"commits_scanned", s.stats.commits_scanned},
                               {"bugfix_commits", s.stats.bugfix_commits},
                               {"commits_retained", s.stats.commits_retained}});
      log_line("mine: " + std::to_string(s.stats.commits_retained) + " of " +
               std::to_string(s.stats.commits_scanned) + " commits retained, " +
               std::to_string(s.stats.malformed_skipped) + " malformed records skipped");
    } else if (*extract) {
      const auto s =
          pf::extract_dataset(ex_in, pf::LengthBucket::from_limit(bucket), ex_out, jobs);
      write_stats(ex_stats, {{"commits", s.commits},
                             {"files_seen", s.files_seen},
                             {"files_failed", s.files_failed},
                             {"changed_pairs", s.changed_pairs},
                             {"added_functions", s.added},
                             {"deleted_functions", s.deleted},
                             {"skipped_functions", s.skipped_functions},
                             {"duplicates", s.duplicates},
                             {"oversize", s.oversize},
                             {"pairs_written", s.written}});
      log_line("extract: " + std::to_string(s.written) + " pairs written");
    } else if (*lex) {
      const std::string src = pf::read_file(lex_in);
      for (const auto& t : pf::lex(keep_comments ? src : pf::strip_comments(src)))
        std::cout << t << '\n';
    } else if (*bpe_train) {
      pf::require_input(bt_in, "extract");
      const auto b = pf::build_codec(pf::read_dataset(bt_in), {pf::VocabSpec::Kind::bpe, vocab_size});
      if (!b.warning.empty()) log_line("bpe: warning: " + b.warning);
      pf::save_codec(b.codec, bt_out);
      log_line("bpe: vocabulary of " + std::to_string(b.codec.bpe()->vocab_size()) + ", " +
               std::to_string(b.codec.bpe()->merges().size()) + " merges");
    } else if (*bpe_fixed) {
      pf::require_input(bf_in, "extract");
      const auto b = pf::build_codec(pf::read_dataset(bf_in), {pf::VocabSpec::Kind::fixed, top_k});
      pf::save_codec(b.codec, bf_out);
    } else if (*bpe_encode) {
      const pf::Codec codec = pf::Codec::load(codec_path);
      map_lines(io_in, io_out, [&](const std::string& line) {
        const auto tokens = pf::parse_string_array(line);
        if (codec.is_bpe()) return pf::to_json_array(codec.bpe()->encode(tokens));
        return pf::to_json_array(codec.fixed()->encode(tokens).tokens);
      });
    } else if (*bpe_decode) {
      const pf::Codec codec = pf::Codec::load(codec_path);
      if (!codec.is_bpe()) throw pf::ConfigError("decode needs a BPE model");
      map_lines(io_in, io_out, [&](const std::string& line) {
        return pf::to_json_array(pf::decode(pf::parse_string_array(line)));
      });
    } else if (*train) {
      pf::require_input(tr_data, "extract");
      pf::require_input(tr_codec, "bpe");
      const auto config = load_config(tr_config);
      const auto s = pf::train_model(pf::read_dataset(tr_data), pf::Codec::load(tr_codec), config,
                                     tr_out, log_line);
      log_line("train: best epoch " + std::to_string(s.outcome.best_epoch) +
               ", validation accuracy " + std::to_string(s.outcome.best_accuracy) +
               (s.outcome.diverged ? " (diverged)" : ""));
    } else if (*predict) {
      pf::require_input(pr_ckpt, "train");
      pf::require_input(pr_codec, "bpe");
      const pf::Codec codec = pf::Codec::load(pr_codec);
      const auto ck = pf::load_checkpoint(pr_ckpt);
      if (ck.info.codec_fingerprint != codec.fingerprint())
        throw pf::DataError("checkpoint was trained with a different vocabulary");
      const auto s = pf::predict_testset(pf::read_testset(pr_in), ck.model, codec,
                                         {beam_width, max_len, penalty}, jobs, pr_out);
      log_line("predict: " + std::to_string(s.predictions) + " predictions for " +
               std::to_string(s.functions) + " functions, " + std::to_string(s.undecodable) +
               " undecodable, " + std::to_string(s.skipped_long) + " too long");
    } else if (*evaluate) {
      pf::require_input(ev_pred, "predict");
      const auto report = pf::evaluate(pf::read_testset(ev_truth), pf::read_predictions(ev_pred));
      pf::write_file(ev_report, pf::report_to_json(report, ev_name));
      std::cout << "fixed_functions " << report.fixed_functions.count << '/'
                << report.fixed_functions.total << "\npartially_fixed "
                << report.partially_fixed.count << '/' << report.partially_fixed.total
                << "\ncompletely_fixed " << report.completely_fixed.count << '/'
                << report.completely_fixed.total << '\n';
    } else if (*pipeline) {
      auto config = load_config(pl_config);
      if (pipeline->count("--jobs")) config.jobs = jobs;
      pf::Pipeline runner(config, {pl_in, pl_testset, pl_workdir}, force, log_line);
      if (pl_stages.empty()) {
        runner.run_all();
      } else {
        for (const auto& s : pl_stages) runner.run(pf::parse_stage(s));
      }
    }
  } catch (const pf::Error& e) {
    log_line(std::string("error: ") + e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    log_line(std::string("internal error: ") + e.what());
    return static_cast<int>(pf::ExitCode::internal);
  }
  return 0;
}

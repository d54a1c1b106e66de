// Command-line front end: corpus preparation, synthetic data, training,
// evaluation, alpha sweeps, the auxiliary-task ablation, tagging and stats.
//
// Exit codes: 0 success, 1 domain error (parse, shape, divergence),
// 2 usage or I/O error.
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dfl/ablation.hpp"
#include "dfl/checkpoint.hpp"
#include "dfl/corpus.hpp"
#include "dfl/io_error.hpp"
#include "dfl/multitask.hpp"
#include "dfl/run_config.hpp"

namespace fs = std::filesystem;
using namespace dfl;

namespace {

int decode_threads() {
  const char* env = std::getenv("DFL_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1)
    throw std::runtime_error("DFL_THREADS must be a positive integer, got '" +
                             std::string(env) + "'");
  return static_cast<int>(v);
}

std::vector<Sentence> read_corpus(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open corpus '" + path + "'");
  try {
    return parse_conll(f, fs::path(path).filename().string());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.position());
  }
}

std::vector<Sentence> read_required_split(const std::string& path, const char* key) {
  if (path.empty())
    throw std::runtime_error(std::string("config: [data] ") + key +
                             " is required for this command");
  return read_corpus(path);
}

Vocab read_vocab_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open vocab '" + path + "'");
  std::vector<std::string> words;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return Vocab::from_words(words);
}

// Vocabulary comes from the file when the config names one, otherwise it is
// rebuilt from the training split exactly as build_model does.
JointModel make_model(const RunConfig& rc, const std::vector<Sentence>& train_split) {
  const auto seed = static_cast<uint64_t>(rc.train.seed);
  if (rc.vocab_path.empty())
    return build_model(rc.encoder, train_split, rc.train.aux_tasks, seed);

  std::map<Task, Tagset> tagsets;
  tagsets.emplace(Task::Disfl, Tagset::disfl());
  if (rc.train.aux_tasks.count(Task::Ner)) tagsets.emplace(Task::Ner, Tagset::ner());
  if (rc.train.aux_tasks.count(Task::Pos))
    tagsets.emplace(Task::Pos, Tagset::pos_from(train_split));
  return JointModel::init(rc.encoder, read_vocab_file(rc.vocab_path), tagsets, seed);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path + "'");
  return f;
}

std::string out_file(const RunConfig& rc, const char* name) {
  if (rc.out_dir.empty()) throw std::runtime_error("config: [data] out_dir is required");
  fs::create_directories(rc.out_dir);
  return (fs::path(rc.out_dir) / name).string();
}

std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

void warn_truncated(const EncodedBatch& batch, int max_len) {
  if (batch.truncated > 0)
    std::cerr << "warning: " << batch.truncated << " sentence(s) longer than max_len="
              << max_len << " were truncated\n";
}

Metrics score_disfl(const JointModel& model, const EncodedBatch& batch) {
  const int positive = model.tagsets.at(Task::Disfl).index_of("D");
  Metrics m = token_prf(decode_task(model, batch, Task::Disfl, decode_threads()),
                        gold_labels(batch, Task::Disfl), positive);
  return m;
}

// ---------------------------------------------------------------------------
// prepare

struct PrepareOpts {
  std::string input_dir;
  std::string format;
  std::string out_dir;
};

void cmd_prepare(const PrepareOpts& opt) {
  std::error_code ec;
  if (!fs::is_directory(opt.input_dir, ec))
    throw IoError("input '" + opt.input_dir + "' is not a directory");

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(opt.input_dir))
    if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw std::runtime_error("no input files in '" + opt.input_dir + "'");

  std::map<Split, std::vector<Sentence>> splits;
  std::vector<std::pair<std::string, Split>> manifest;
  size_t errors = 0;
  size_t skipped = 0;

  for (const std::string& name : names) {
    const Split split = split_of_filename(name);
    manifest.emplace_back(name, split);
    if (split == Split::Other) {
      ++skipped;
      continue;
    }

    const std::string path = (fs::path(opt.input_dir) / name).string();
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'");

    if (opt.format == "conll") {
      try {
        auto sentences = parse_conll(f, name);
        auto& dst = splits[split];
        dst.insert(dst.end(), std::make_move_iterator(sentences.begin()),
                   std::make_move_iterator(sentences.end()));
      } catch (const ParseError& e) {
        std::cerr << path << ": " << e.what() << '\n';
        ++errors;
      }
      continue;
    }

    // Bracketed transcripts: one sentence per non-blank line.
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const size_t first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      try {
        splits[split].push_back(parse_bracketed(line, name + ":" + std::to_string(line_no)));
      } catch (const ParseError& e) {
        std::cerr << path << ":" << line_no << ": " << e.what() << '\n';
        ++errors;
      }
    }
  }

  if (skipped > 0)
    std::cerr << "warning: " << skipped << " file(s) matched no split pattern and were skipped\n";
  if (errors > 0)
    throw std::runtime_error(std::to_string(errors) + " unparseable sentence(s), see messages above");

  fs::create_directories(opt.out_dir);
  const std::pair<Split, const char*> outputs[] = {
      {Split::Train, "train.conll"}, {Split::Dev, "dev.conll"}, {Split::Test, "test.conll"}};
  for (const auto& [split, file] : outputs) {
    auto out = open_output((fs::path(opt.out_dir) / file).string());
    write_conll(out, splits[split]);
    std::cout << file << ": " << splits[split].size() << " sentence(s)\n";
  }

  auto mf = open_output((fs::path(opt.out_dir) / "splits.tsv").string());
  for (const auto& [name, split] : manifest) mf << name << '\t' << split_name(split) << '\n';
}

// ---------------------------------------------------------------------------
// synth

struct SynthOpts {
  uint64_t seed = 1;
  int size = 1000;
  std::string out;
};

void cmd_synth(const SynthOpts& opt) {
  const auto sentences = synth_generate(default_synth_config(opt.seed, opt.size));
  auto f = open_output(opt.out);
  f << "# synthetic disfluency corpus seed=" << opt.seed << " size=" << opt.size << '\n';
  write_conll(f, sentences);
  std::cout << "wrote " << sentences.size() << " sentence(s) to " << opt.out << '\n';
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string config;
  std::optional<int> seed;
};

void cmd_train(const TrainOpts& opt) {
  RunConfig rc = RunConfig::load(opt.config);
  if (opt.seed) rc.train.seed = *opt.seed;
  rc.train.validate();
  rc.encoder.validate();

  const auto train_split = read_required_split(rc.train_path, "train");
  const auto dev_split = read_required_split(rc.dev_path, "dev");

  JointModel model = make_model(rc, train_split);
  TrainResult result = train(model, train_split, dev_split, rc.train);

  const std::string csv_path = out_file(rc, "epochs.csv");
  auto csv = open_output(csv_path);
  csv << "epoch,train_loss,dev_p,dev_r,dev_f1\n";
  for (const EpochRecord& rec : result.log)
    csv << rec.epoch << ',' << fixed6(rec.train_loss) << ',' << fixed6(rec.dev.precision)
        << ',' << fixed6(rec.dev.recall) << ',' << fixed6(rec.dev.f1) << '\n';

  CheckpointMeta meta;
  meta.config = rc.snapshot();
  meta.best_dev_f1 = result.best_dev_f1;
  const std::string ckpt_path = out_file(rc, "model.ckpt");
  save_checkpoint(ckpt_path, result.model, meta);

  std::cout << "best dev F1 " << fixed6(result.best_dev_f1) << " at epoch "
            << result.best_epoch << '\n'
            << "wrote " << ckpt_path << " and " << csv_path << '\n';
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
  std::string ckpt;
  std::string test;
  bool strip = false;
};

void cmd_eval(const EvalOpts& opt) {
  LoadedCheckpoint lc = load_checkpoint(opt.ckpt);
  const JointModel model = opt.strip ? strip_aux(lc.model) : lc.model;
  const auto sentences = read_corpus(opt.test);

  const int max_len = model.encoder.cfg.max_len;
  const EncodedBatch batch = encode_batch(sentences, model.tagsets, model.vocab, max_len);
  warn_truncated(batch, max_len);
  const Metrics m = score_disfl(model, batch);

  std::cout << "precision=" << fixed6(m.precision) << " recall=" << fixed6(m.recall)
            << " f1=" << fixed6(m.f1) << " (tp=" << m.tp << " fp=" << m.fp
            << " fn=" << m.fn << ")\n";
  std::cout << "{\"f1\":" << fixed6(m.f1) << ",\"fn\":" << m.fn << ",\"fp\":" << m.fp
            << ",\"precision\":" << fixed6(m.precision) << ",\"recall\":" << fixed6(m.recall)
            << ",\"tp\":" << m.tp << "}\n";
}

// ---------------------------------------------------------------------------
// sweep / ablate

struct MultiRunOpts {
  std::string config;
  std::vector<double> alphas;
  std::vector<int> seeds = {1, 2, 3, 4, 5};
  std::optional<int> seed;

  std::vector<int> seed_list() const { return seed ? std::vector<int>{*seed} : seeds; }
};

void cmd_sweep(const MultiRunOpts& opt) {
  RunConfig rc = RunConfig::load(opt.config);
  rc.train.validate();
  rc.encoder.validate();
  const auto train_split = read_required_split(rc.train_path, "train");
  const auto dev_split = read_required_split(rc.dev_path, "dev");

  const SweepResult sweep =
      alpha_sweep(rc.encoder, rc.train, opt.alphas, opt.seed_list(), train_split, dev_split);

  const std::string path = out_file(rc, "sweep.csv");
  auto out = open_output(path);
  write_sweep_csv(out, sweep);
  std::cout << "best alpha " << sweep.best_alpha << " by mean dev F1\nwrote " << path << '\n';
}

void cmd_ablate(const MultiRunOpts& opt) {
  RunConfig rc = RunConfig::load(opt.config);
  rc.train.validate();
  rc.encoder.validate();
  const auto train_split = read_required_split(rc.train_path, "train");
  const auto dev_split = read_required_split(rc.dev_path, "dev");
  const auto test_split = read_required_split(rc.test_path, "test");

  const AblationResult result =
      ablation(rc.encoder, rc.train, opt.seed_list(), train_split, dev_split, test_split);

  const std::string path = out_file(rc, "ablation.csv");
  auto out = open_output(path);
  write_ablation_report(out, result);
  write_ablation_report(std::cout, result);
  std::cout << "wrote " << path << '\n';
}

// ---------------------------------------------------------------------------
// tag

struct TagOpts {
  std::string ckpt;
  std::string input;
};

void cmd_tag(const TagOpts& opt) {
  LoadedCheckpoint lc = load_checkpoint(opt.ckpt);
  const JointModel& model = lc.model;
  const Tagset& tagset = model.tagsets.at(Task::Disfl);

  std::ifstream f(opt.input);
  if (!f) throw IoError("cannot open input '" + opt.input + "'");

  std::vector<Sentence> sentences;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    Sentence s;
    s.source_id = "line " + std::to_string(line_no);
    std::istringstream words(line);
    std::string word;
    while (words >> word) s.tokens.push_back(Token{word, kUnkPos, "O", Fluency::Fluent});
    if (!s.tokens.empty()) sentences.push_back(std::move(s));
  }
  if (sentences.empty()) return;

  const int max_len = model.encoder.cfg.max_len;
  const EncodedBatch batch = encode_batch(sentences, model.tagsets, model.vocab, max_len);
  warn_truncated(batch, max_len);
  const auto paths = decode_task(model, batch, Task::Disfl, decode_threads());

  for (size_t i = 0; i < sentences.size(); ++i) {
    const auto& tokens = sentences[i].tokens;
    const auto& path = paths[i];
    for (size_t t = 0; t < tokens.size(); ++t) {
      if (t > 0) std::cout << ' ';
      // Tokens past the truncation point were never scored; default to F.
      const std::string& label =
          t < path.size() ? tagset.label(path[t]) : tagset.label(tagset.index_of("F"));
      std::cout << tokens[t].text << '/' << label;
    }
    std::cout << '\n';
  }
}

// ---------------------------------------------------------------------------
// stats

void cmd_stats(const std::string& corpus_path) {
  write_stats_report(std::cout, corpus_stats(read_corpus(corpus_path)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task disfluency sequence labeling"};
  app.require_subcommand(1);

  PrepareOpts prepare_opts;
  auto* prepare = app.add_subcommand("prepare", "split raw corpus files into train/dev/test");
  prepare->add_option("--input", prepare_opts.input_dir, "directory of corpus files")->required();
  prepare->add_option("--format", prepare_opts.format, "input format")
      ->required()
      ->check(CLI::IsMember({"bracketed", "conll"}));
  prepare->add_option("--out", prepare_opts.out_dir, "output directory")->required();

  SynthOpts synth_opts;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--seed", synth_opts.seed, "generator seed");
  synth->add_option("--size", synth_opts.size, "number of sentences")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--out", synth_opts.out, "output corpus file")->required();

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "train a model from a run config");
  train_cmd->add_option("--config", train_opts.config, "run config file")->required();
  train_cmd->add_option("--seed", train_opts.seed, "override the config seed");

  EvalOpts eval_opts;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a labeled corpus");
  eval->add_option("--ckpt", eval_opts.ckpt, "checkpoint file")->required();
  eval->add_option("--test", eval_opts.test, "labeled corpus file")->required();
  eval->add_flag("--strip-aux", eval_opts.strip, "drop auxiliary heads before scoring");

  MultiRunOpts sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "train across an alpha grid");
  sweep->add_option("--config", sweep_opts.config, "run config file")->required();
  sweep->add_option("--alphas", sweep_opts.alphas, "comma-separated alpha values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--seeds", sweep_opts.seeds, "comma-separated seeds")->delimiter(',');
  sweep->add_option("--seed", sweep_opts.seed, "run a single seed only");

  MultiRunOpts ablate_opts;
  auto* ablate = app.add_subcommand("ablate", "auxiliary-task ablation over seeds");
  ablate->add_option("--config", ablate_opts.config, "run config file")->required();
  ablate->add_option("--seeds", ablate_opts.seeds, "comma-separated seeds")->delimiter(',');
  ablate->add_option("--seed", ablate_opts.seed, "run a single seed only");

  TagOpts tag_opts;
  auto* tag = app.add_subcommand("tag", "tag whitespace-tokenized text");
  tag->add_option("--ckpt", tag_opts.ckpt, "checkpoint file")->required();
  tag->add_option("--input", tag_opts.input, "text file, one sentence per line")->required();

  std::string stats_corpus;
  auto* stats = app.add_subcommand("stats", "corpus statistics report");
  stats->add_option("--corpus", stats_corpus, "labeled corpus file")->required();

  try {
    app.parse(argc, argv);
    if (prepare->parsed()) cmd_prepare(prepare_opts);
    if (synth->parsed()) cmd_synth(synth_opts);
    if (train_cmd->parsed()) cmd_train(train_opts);
    if (eval->parsed()) cmd_eval(eval_opts);
    if (sweep->parsed()) cmd_sweep(sweep_opts);
    if (ablate->parsed()) cmd_ablate(ablate_opts);
    if (tag->parsed()) cmd_tag(tag_opts);
    if (stats->parsed()) cmd_stats(stats_corpus);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

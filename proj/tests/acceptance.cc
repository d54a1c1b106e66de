// Release gate: one check per shipping criterion, one PASS/FAIL line each.
// Exit code is the number of failed criteria (0 when all hold).
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfl/ablation.hpp"
#include "dfl/corpus.hpp"
#include "dfl/crf.hpp"
#include "dfl/metrics.hpp"
#include "dfl/multitask.hpp"
#include "oracles.hpp"

using namespace dfl;

namespace {

using Clock = std::chrono::steady_clock;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& msg) {
  if (!cond) throw Failure(msg);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// Encoder and disfluency head compared element for element; aux heads, when
// present, are deliberately outside the comparison.
bool shared_bitwise_equal(JointModel& a, JointModel& b) {
  auto pick = [](JointModel& m) {
    std::vector<TensorRef> out = m.encoder.tensors();
    auto head = m.heads.at(Task::Disfl).tensors();
    out.insert(out.end(), head.begin(), head.end());
    return out;
  };
  const auto ra = pick(a);
  const auto rb = pick(b);
  if (ra.size() != rb.size()) return false;
  for (size_t i = 0; i < ra.size(); ++i) {
    if (ra[i].size() != rb[i].size()) return false;
    for (Eigen::Index k = 0; k < ra[i].size(); ++k)
      if (ra[i].data[k] != rb[i].data[k]) return false;
  }
  return true;
}

// --------------------------------------------------------------------------
// C1: exact inference against exhaustive enumeration.

std::string check_crf_exactness() {
  Rng rng(2024);
  int instances = 0;
  double worst_logz = 0.0;
  for (int num_labels = 2; num_labels <= 4; ++num_labels)
    for (int n = 1; n <= 5; ++n)
      for (int rep = 0; rep < 8; ++rep) {
        const auto inst = oracle::random_crf(num_labels, n, rng);
        const double brute = oracle::log_partition(inst.E, inst.T, inst.s, inst.e);
        const double dp = log_partition(inst.E, inst.T, inst.s, inst.e);
        const double gap = std::abs(dp - brute);
        worst_logz = std::max(worst_logz, gap);
        expect(gap <= 1e-8, "logZ off by " + fmt("%.3g", gap) + " at L=" +
                                std::to_string(num_labels) + " n=" + std::to_string(n));

        const ViterbiResult fast = viterbi(inst.E, inst.T, inst.s, inst.e);
        const ViterbiResult slow = oracle::viterbi(inst.E, inst.T, inst.s, inst.e);
        expect(fast.path == slow.path, "viterbi path diverges from enumeration at L=" +
                                           std::to_string(num_labels) + " n=" +
                                           std::to_string(n));
        expect(std::abs(fast.score - slow.score) <= 1e-8, "viterbi score mismatch");
        ++instances;
      }
  return std::to_string(instances) + " instances, worst |dlogZ| " + fmt("%.2g", worst_logz);
}

// --------------------------------------------------------------------------
// C2: analytic gradients against central finite differences.

std::string check_gradient_fidelity() {
  EncoderConfig cfg;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.d_model = 4;
  cfg.d_ff = 8;
  cfg.dropout_rate = 0.0;
  cfg.max_len = 8;
  cfg.vocab_size = 9;

  double worst = 0.0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const double err = grad_check_encoder_crf(cfg, seed);
    worst = std::max(worst, err);
    expect(err < 1e-4, "seed " + std::to_string(seed) + " relative error " + fmt("%.3g", err));
  }
  return "10 seeds, max relative error " + fmt("%.2g", worst);
}

// --------------------------------------------------------------------------
// C3: objective algebra and alpha-zero training equivalence.

std::string check_objective_algebra() {
  const auto corpus = synth_generate(default_synth_config(21, 16));
  EncoderConfig cfg;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.dropout_rate = 0.0;
  cfg.max_len = 64;

  const JointModel model = build_model(cfg, corpus, {Task::Ner, Task::Pos}, 3);
  const EncodedBatch batch =
      encode_batch(corpus, model.tagsets, model.vocab, cfg.max_len);
  const std::set<Task> aux = {Task::Ner, Task::Pos};
  const TaskLosses base = joint_loss(model, batch, {}, 1.0, aux, false, nullptr, nullptr);
  double worst = 0.0;
  for (double alpha : {0.0, 0.25, 0.5, 1.0}) {
    const TaskLosses l = joint_loss(model, batch, {}, alpha, aux, false, nullptr, nullptr);
    const double gap = std::abs(l.total - (base.disfl + alpha * (base.ner + base.pos)));
    worst = std::max(worst, gap);
    expect(gap < 1e-9, "alpha " + fmt("%.2f", alpha) + " off by " + fmt("%.3g", gap));
  }

  TrainConfig tc;
  tc.alpha = 0.0;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.learning_rate = 1e-3;
  tc.seed = 5;
  TrainConfig tc_aux = tc;
  tc_aux.aux_tasks = {Task::Ner, Task::Pos};

  TrainResult with_aux =
      train(build_model(cfg, corpus, {Task::Ner, Task::Pos}, 5), corpus, corpus, tc_aux);
  TrainResult single = train(build_model(cfg, corpus, {}, 5), corpus, corpus, tc);
  expect(with_aux.log.size() == single.log.size(), "epoch logs differ in length");
  for (size_t i = 0; i < with_aux.log.size(); ++i) {
    expect(with_aux.log[i].train_loss == single.log[i].train_loss,
           "train loss differs at epoch " + std::to_string(i + 1));
    expect(with_aux.log[i].dev.f1 == single.log[i].dev.f1,
           "dev F1 differs at epoch " + std::to_string(i + 1));
  }
  expect(shared_bitwise_equal(with_aux.model, single.model),
         "shared weights differ after alpha-zero training");
  return "linear to " + fmt("%.1g", std::max(worst, 1e-18)) + ", alpha-zero run bit-identical";
}

// --------------------------------------------------------------------------
// C4: stripping aux heads changes neither predictions nor speed.

std::string check_inference_contract() {
  const auto corpus = synth_generate(default_synth_config(31, 1000));
  EncoderConfig cfg;
  cfg.num_layers = 1;
  cfg.num_heads = 4;
  cfg.d_model = 64;
  cfg.d_ff = 128;
  cfg.dropout_rate = 0.1;
  cfg.max_len = 64;

  const JointModel full = build_model(cfg, corpus, {Task::Ner, Task::Pos}, 2);
  const JointModel lean = strip_aux(full);
  const EncodedBatch batch = encode_batch(corpus, full.tagsets, full.vocab, cfg.max_len);

  const auto paths_full = decode_task(full, batch, Task::Disfl);
  const auto paths_lean = decode_task(lean, batch, Task::Disfl);
  expect(paths_full == paths_lean, "paths changed after stripping aux heads");
  expect(paths_full.size() == corpus.size(), "path count mismatch");

  auto timed = [&batch](const JointModel& m) {
    const auto t0 = Clock::now();
    const auto paths = decode_task(m, batch, Task::Disfl);
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    expect(!paths.empty(), "empty decode");
    return dt;
  };
  timed(full);  // warm up both code paths once
  timed(lean);
  double t_full = 1e300;
  double t_lean = 1e300;
  for (int rep = 0; rep < 5; ++rep) {
    t_full = std::min(t_full, timed(full));
    t_lean = std::min(t_lean, timed(lean));
  }
  const double rel = std::abs(t_full - t_lean) / t_full;
  expect(rel < 0.10, "throughput gap " + fmt("%.1f", rel * 100.0) + "% exceeds 10%");
  return "1000 sentences identical, throughput gap " + fmt("%.1f", rel * 100.0) + "%";
}

// --------------------------------------------------------------------------
// C5: memorize a tiny corpus.

std::string check_overfit() {
  const auto corpus = synth_generate(default_synth_config(41, 8));
  size_t disfluent = 0;
  for (const Sentence& s : corpus)
    for (const Token& t : s.tokens)
      if (t.disfl == Fluency::Disfluent) ++disfluent;
  expect(disfluent > 0, "generator produced no disfluent tokens to learn");

  EncoderConfig cfg;
  cfg.num_layers = 1;
  cfg.num_heads = 4;
  cfg.d_model = 32;
  cfg.d_ff = 64;
  cfg.dropout_rate = 0.0;
  cfg.max_len = 64;

  TrainConfig tc;
  tc.alpha = 0.0;
  tc.epochs = 100;
  tc.batch_size = 1;
  tc.learning_rate = 1e-3;
  tc.seed = 1;

  const TrainResult res = train(build_model(cfg, corpus, {}, 1), corpus, corpus, tc);
  expect(res.best_dev_f1 == 1.0,
         "best training F1 " + fmt("%.4f", res.best_dev_f1) + " after 100 epochs");
  return "F1 1.0 first reached at epoch " + std::to_string(res.best_epoch);
}

// --------------------------------------------------------------------------
// C6: POS auxiliary must not hurt on the fixed synthetic benchmark.

std::string check_directional_multitask() {
  const auto train_split = synth_generate(default_synth_config(101, 2000));
  const auto dev_split = synth_generate(default_synth_config(102, 400));
  const auto test_split = synth_generate(default_synth_config(103, 400));

  EncoderConfig cfg;
  cfg.num_layers = 1;
  cfg.num_heads = 4;
  cfg.d_model = 32;
  cfg.d_ff = 64;
  cfg.dropout_rate = 0.1;
  cfg.max_len = 64;

  TrainConfig base;
  base.alpha = 0.1;
  base.learning_rate = 1e-3;
  base.batch_size = 32;
  base.epochs = 6;

  const AblationResult result =
      ablation(cfg, base, {1, 2, 3, 4, 5}, train_split, dev_split, test_split);
  expect(result.rows.size() == 4, "expected 4 ablation settings");

  std::ostringstream report;
  write_ablation_report(report, result);
  int data_rows = 0;
  std::istringstream in(report.str());
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#' && line.rfind("setting,", 0) != 0) ++data_rows;
  expect(data_rows == 4, "report is missing settings");

  const double none_f1 = result.rows[0].test.mean_f1;
  const double pos_f1 = result.rows[2].test.mean_f1;
  expect(result.rows[2].setting == "pos", "unexpected row order in ablation result");
  expect(pos_f1 >= none_f1 - 0.002,
         "pos-aux mean F1 " + fmt("%.4f", pos_f1) + " fell more than 0.002 below " +
             fmt("%.4f", none_f1));
  return "mean test F1 none " + fmt("%.4f", none_f1) + " vs pos " + fmt("%.4f", pos_f1) +
         " over 5 seeds";
}

// --------------------------------------------------------------------------
// C7: scoring arithmetic.

std::string check_metrics() {
  {
    const Metrics m = token_prf({{1, 1, 0}}, {{1, 0, 0}});
    expect(m.tp == 1 && m.fp == 1 && m.fn == 0, "count mismatch on 2-vs-1 positives");
    expect(m.precision == 0.5 && m.recall == 1.0, "fraction mismatch");
    expect(std::abs(m.f1 - 2.0 / 3.0) < 1e-12, "f1 mismatch");
  }
  {
    std::vector<int> pred(6, 0), gold(6, 0);
    pred[2] = pred[3] = 1;
    gold[3] = gold[4] = 1;
    const Metrics m = token_prf({pred}, {gold});
    expect(m.tp == 1 && m.fp == 1 && m.fn == 1, "count mismatch on offset spans");
    expect(m.precision == 0.5 && m.recall == 0.5 && m.f1 == 0.5, "offset spans f1");
  }
  {
    const Metrics m = token_prf({{1, 0, 1}}, {{1, 0, 1}});
    expect(m.tp == 2 && m.fp == 0 && m.fn == 0 && m.f1 == 1.0, "perfect prediction");
  }
  Metrics a, b;
  a.f1 = 0.8;
  b.f1 = 0.9;
  const AggregateMetrics agg = average_runs({a, b});
  expect(std::abs(agg.mean_f1 - 0.85) < 1e-12, "mean of {0.8, 0.9}");
  expect(std::abs(agg.std_f1 - 0.070711) <= 1e-6,
         "stddev " + fmt("%.6f", agg.std_f1) + " not within 1e-6 of 0.070711");
  return "hand counts and run aggregation exact";
}

// --------------------------------------------------------------------------
// C8: corpus formats.

std::string check_corpus() {
  const Sentence annotated =
      parse_bracketed("[ I/prp want/vbp + {um/uh} I/prp need/vbp ] a/dt flight/nn");
  std::string text, labels;
  for (const Token& t : annotated.tokens) {
    if (!text.empty()) text.push_back(' ');
    text += t.text;
    labels.push_back(fluency_char(t.disfl));
  }
  expect(text == "I want um I need a flight", "bracket grammar token stream");
  expect(labels == "DDFFFFF", "bracket grammar labels");

  const Sentence nested = parse_bracketed("[ [ a/dt + b/dt ] + c/dt ]");
  std::string nested_labels;
  for (const Token& t : nested.tokens) nested_labels.push_back(fluency_char(t.disfl));
  expect(nested_labels == "DDF", "nested group labels");

  const std::string conll =
      "I\tprp\tO\tD\ngo\tvbp\tO\tF\n\nnew\tnnp\tB-LOC\tF\nyork\tnnp\tI-LOC\tF\n";
  std::istringstream in(conll);
  const auto parsed = parse_conll(in);
  std::ostringstream out;
  write_conll(out, parsed);
  expect(out.str() == conll, "round trip is not byte-identical");

  expect(split_of_filename("sw2301.dff") == Split::Train, "sw2301.dff routing");
  expect(split_of_filename("sw4601.dff") == Split::Dev, "sw4601.dff routing");
  expect(split_of_filename("sw4102.dff") == Split::Test, "sw4102.dff routing");
  return "goldens, byte round trip and split routing hold";
}

struct Criterion {
  const char* id;
  const char* what;
  double budget_seconds;  // 0 = untimed
  std::function<std::string()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"C1", "exact inference vs exhaustive enumeration", 10.0, check_crf_exactness},
      {"C2", "analytic gradients vs finite differences", 60.0, check_gradient_fidelity},
      {"C3", "joint objective algebra, alpha-zero bit identity", 0.0, check_objective_algebra},
      {"C4", "aux stripping: same paths, same throughput", 0.0, check_inference_contract},
      {"C5", "overfit 8 sentences to F1 1.0 within 100 epochs", 120.0, check_overfit},
      {"C6", "pos auxiliary non-regression, full ablation report", 1800.0,
       check_directional_multitask},
      {"C7", "metric hand counts and multi-seed aggregation", 0.0, check_metrics},
      {"C8", "bracket grammar, round trip, split routing", 0.0, check_corpus},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = Clock::now();
    std::string verdict;
    std::string detail;
    try {
      detail = c.run();
      verdict = "PASS";
    } catch (const std::exception& e) {
      detail = e.what();
      verdict = "FAIL";
    }
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    if (verdict == "PASS" && c.budget_seconds > 0.0 && dt > c.budget_seconds) {
      verdict = "FAIL";
      detail = "took " + fmt("%.1f", dt) + "s, budget " + fmt("%.0f", c.budget_seconds) + "s";
    }
    if (verdict == "FAIL") ++failed;
    std::printf("%s %s: %s (%s) [%.1fs]\n", c.id, c.what, verdict.c_str(), detail.c_str(), dt);
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed;
}

#include "dfl/ablation.hpp"

#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace dfl {

namespace {

std::string fixed4(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", x);
  return buf;
}

}  // namespace

AblationResult ablation(const EncoderConfig& enc_cfg, const TrainConfig& base,
                        const std::vector<int>& seeds,
                        const std::vector<Sentence>& train_split,
                        const std::vector<Sentence>& dev_split,
                        const std::vector<Sentence>& test_split) {
  if (seeds.empty()) throw std::invalid_argument("ablation: no seeds given");
  if (test_split.empty()) throw std::invalid_argument("ablation: empty test split");

  const std::pair<std::string, std::set<Task>> settings[] = {
      {"none", {}},
      {"ner", {Task::Ner}},
      {"pos", {Task::Pos}},
      {"ner+pos", {Task::Ner, Task::Pos}},
  };

  AblationResult result;
  for (const auto& [name, aux] : settings) {
    std::vector<Metrics> runs;
    runs.reserve(seeds.size());
    for (int seed : seeds) {
      TrainConfig cfg = base;
      cfg.aux_tasks = aux;
      cfg.seed = seed;
      try {
        JointModel model =
            build_model(enc_cfg, train_split, aux, static_cast<uint64_t>(seed));
        TrainResult tr = train(model, train_split, dev_split, cfg);
        const EncodedBatch test_batch = encode_batch(test_split, tr.model.tagsets,
                                                     tr.model.vocab, enc_cfg.max_len);
        const int positive = tr.model.tagsets.at(Task::Disfl).index_of("D");
        runs.push_back(token_prf(decode_task(tr.model, test_batch, Task::Disfl),
                                 gold_labels(test_batch, Task::Disfl), positive));
      } catch (const std::exception& e) {
        throw std::runtime_error("setting=" + name + " seed=" + std::to_string(seed) + ": " +
                                 e.what());
      }
    }
    AblationRow row;
    row.setting = name;
    row.test = average_runs(runs);
    result.rows.push_back(row);
  }

  const double none_f1 = result.rows.front().test.mean_f1;
  for (AblationRow& row : result.rows) row.delta_f1_vs_none = row.test.mean_f1 - none_f1;
  return result;
}

void write_ablation_report(std::ostream& out, const AblationResult& result) {
  out << "# reference deltas (published Switchboard results, transformer encoder): "
         "ner=+1.1 pos=+1.6 ner+pos=+1.8 F1 points\n";
  out << "setting,mean_p,mean_r,mean_f1,std_f1,delta_f1_vs_none\n";
  for (const AblationRow& row : result.rows)
    out << row.setting << ',' << fixed4(row.test.mean_precision) << ','
        << fixed4(row.test.mean_recall) << ',' << fixed4(row.test.mean_f1) << ','
        << fixed4(row.test.std_f1) << ',' << fixed4(row.delta_f1_vs_none) << '\n';
}

}  // namespace dfl

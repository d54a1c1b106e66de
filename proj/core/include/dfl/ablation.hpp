// Four-way auxiliary-task ablation: trains {none, ner, pos, ner+pos} over a
// seed list and reports mean test scores with deltas against the no-aux row.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dfl/multitask.hpp"

namespace dfl {

struct AblationRow {
  std::string setting;  // "none", "ner", "pos", "ner+pos"
  AggregateMetrics test;
  double delta_f1_vs_none = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // always the four settings, fixed order
};

// One train() per (setting, seed); each run scores its best-dev checkpoint
// on the test split. base.aux_tasks is ignored; the setting decides.
AblationResult ablation(const EncoderConfig& enc_cfg, const TrainConfig& base,
                        const std::vector<int>& seeds,
                        const std::vector<Sentence>& train_split,
                        const std::vector<Sentence>& dev_split,
                        const std::vector<Sentence>& test_split);

// Header comment with the published reference deltas, then CSV rows
// setting,mean_p,mean_r,mean_f1,std_f1,delta_f1_vs_none with 4 decimals.
void write_ablation_report(std::ostream& out, const AblationResult& result);

}  // namespace dfl

#include "dfl/multitask.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace dfl {

namespace {

std::vector<int> all_rows(const EncodedBatch& batch) {
  std::vector<int> rows(batch.lengths.size());
  for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  return rows;
}

std::vector<int> row_ids(const EncodedBatch& batch, int row) {
  const int len = batch.lengths[static_cast<size_t>(row)];
  const auto& full = batch.token_ids[static_cast<size_t>(row)];
  return std::vector<int>(full.begin(), full.begin() + len);
}

std::vector<int> row_gold(const EncodedBatch& batch, Task task, int row) {
  const int len = batch.lengths[static_cast<size_t>(row)];
  const auto& full = batch.labels.at(task)[static_cast<size_t>(row)];
  return std::vector<int>(full.begin(), full.begin() + len);
}

std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

}  // namespace

JointModel JointModel::init(const EncoderConfig& cfg, const Vocab& vocab,
                            const std::map<Task, Tagset>& tagsets, uint64_t seed) {
  if (tagsets.count(Task::Disfl) == 0)
    throw std::invalid_argument("joint model needs a disfluency tagset");
  EncoderConfig ecfg = cfg;
  ecfg.vocab_size = vocab.size();
  ecfg.validate();

  JointModel m;
  m.vocab = vocab;
  m.tagsets = tagsets;
  Rng rng(seed);
  m.encoder = EncoderParams::init(ecfg, rng);
  for (const auto& [task, tagset] : tagsets)
    m.heads.emplace(task, CrfHead::init(task, ecfg.d_model, tagset.size(), rng));
  return m;
}

std::vector<TensorRef> JointModel::tensors() {
  std::vector<TensorRef> out = encoder.tensors();
  for (auto& [task, head] : heads) {
    (void)task;
    auto ht = head.tensors();
    out.insert(out.end(), ht.begin(), ht.end());
  }
  return out;
}

std::vector<ConstTensorRef> JointModel::tensors() const {
  auto mutable_refs = const_cast<JointModel*>(this)->tensors();
  std::vector<ConstTensorRef> out;
  out.reserve(mutable_refs.size());
  for (const auto& r : mutable_refs) out.push_back({r.name, r.data, r.rows, r.cols});
  return out;
}

JointModel build_model(EncoderConfig cfg, const std::vector<Sentence>& train,
                       const std::set<Task>& aux_tasks, uint64_t seed) {
  if (train.empty()) throw std::invalid_argument("build_model: empty training split");
  Vocab vocab = Vocab::build(train);
  std::map<Task, Tagset> tagsets;
  tagsets.emplace(Task::Disfl, Tagset::disfl());
  if (aux_tasks.count(Task::Ner)) tagsets.emplace(Task::Ner, Tagset::ner());
  if (aux_tasks.count(Task::Pos)) tagsets.emplace(Task::Pos, Tagset::pos_from(train));
  return JointModel::init(cfg, vocab, tagsets, seed);
}

JointModel strip_aux(const JointModel& model) {
  if (!model.has(Task::Disfl)) throw std::invalid_argument("strip_aux: no disfluency head");
  JointModel out;
  out.encoder = model.encoder;
  out.vocab = model.vocab;
  out.heads.emplace(Task::Disfl, model.heads.at(Task::Disfl));
  out.tagsets.emplace(Task::Disfl, model.tagsets.at(Task::Disfl));
  return out;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("train config: alpha must be a finite value >= 0");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("train config: learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
  if (!(grad_clip_norm > 0.0))
    throw std::invalid_argument("train config: grad_clip_norm must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("train config: adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("train config: adam_eps must be > 0");
  if (aux_tasks.count(Task::Disfl))
    throw std::invalid_argument("train config: disfl is the main task, not an aux task");
}

JointGrads JointGrads::zeros_like(const JointModel& model) {
  JointGrads g;
  g.encoder = EncoderGrads::zeros_like(model.encoder);
  for (const auto& [task, head] : model.heads) g.heads.emplace(task, CrfGrads::zeros_like(head));
  return g;
}

void JointGrads::set_zero() {
  encoder.set_zero();
  for (auto& [task, g] : heads) {
    (void)task;
    g.set_zero();
  }
}

std::vector<TensorRef> JointGrads::tensors() {
  std::vector<TensorRef> out = encoder.tensors();
  for (auto& [task, g] : heads) {
    auto ht = g.tensors(task);
    out.insert(out.end(), ht.begin(), ht.end());
  }
  return out;
}

namespace {

// Adds one head's batch contribution for one sentence: loss, head gradients
// scaled by `weight`, and `weight` times the emission backprop into dH.
double head_loss_for_sentence(const CrfHead& head, const Mat& h, const std::vector<int>& gold,
                              double weight, Mat* dH, CrfGrads* head_grads) {
  Mat e = emissions(head, h);
  Mat dE, dT;
  Vec ds, de;
  const double loss = crf_nll(e, head.T, head.s, head.e, gold, dE, dT, ds, de);
  if (head_grads != nullptr && dH != nullptr) {
    if (weight != 1.0) {
      dE *= weight;
      dT *= weight;
      ds *= weight;
      de *= weight;
    }
    head_grads->dT += dT;
    head_grads->ds += ds;
    head_grads->de += de;
    emissions_backward(head, h, dE, *dH, *head_grads);
  }
  return loss;
}

}  // namespace

TaskLosses joint_loss(const JointModel& model, const EncodedBatch& batch,
                      const std::vector<int>& rows, double alpha,
                      const std::set<Task>& aux_tasks, bool train_mode, Rng* rng,
                      JointGrads* grads) {
  const std::vector<int> all = rows.empty() ? all_rows(batch) : rows;
  if (all.empty()) throw std::invalid_argument("joint_loss: empty batch");
  if (batch.labels.count(Task::Disfl) == 0)
    throw std::invalid_argument("joint_loss: batch carries no disfluency labels");
  for (Task t : aux_tasks) {
    if (!model.has(t))
      throw std::invalid_argument(std::string("joint_loss: no head for aux task ") +
                                  task_name(t));
    if (batch.labels.count(t) == 0)
      throw std::invalid_argument(std::string("joint_loss: batch carries no ") + task_name(t) +
                                  " labels");
  }
  const bool run_aux = alpha != 0.0 && !aux_tasks.empty();

  if (grads != nullptr) grads->set_zero();

  TaskLosses sums;
  EncoderCache cache;
  for (int r : all) {
    const std::vector<int> ids = row_ids(batch, r);
    const std::vector<uint8_t> mask(ids.size(), 1);
    const Mat& h = encoder_forward(model.encoder, ids, mask, train_mode, rng, cache);

    Mat dH;
    Mat* dH_ptr = nullptr;
    if (grads != nullptr) {
      dH = Mat::Zero(h.rows(), h.cols());
      dH_ptr = &dH;
    }

    sums.disfl += head_loss_for_sentence(
        model.heads.at(Task::Disfl), h, row_gold(batch, Task::Disfl, r), 1.0, dH_ptr,
        grads != nullptr ? &grads->heads.at(Task::Disfl) : nullptr);
    if (run_aux) {
      for (Task t : aux_tasks) {
        const double loss = head_loss_for_sentence(
            model.heads.at(t), h, row_gold(batch, t, r), alpha, dH_ptr,
            grads != nullptr ? &grads->heads.at(t) : nullptr);
        (t == Task::Ner ? sums.ner : sums.pos) += loss;
      }
    }

    if (grads != nullptr) encoder_backward(model.encoder, cache, dH, grads->encoder);
  }

  const double inv = 1.0 / static_cast<double>(all.size());
  sums.disfl *= inv;
  sums.ner *= inv;
  sums.pos *= inv;
  sums.total = sums.disfl + alpha * (sums.ner + sums.pos);
  if (grads != nullptr) {
    grads->encoder.scale(inv);
    for (auto& [task, g] : grads->heads) {
      (void)task;
      g.scale(inv);
    }
  }
  return sums;
}

double single_task_loss(const JointModel& model, const EncodedBatch& batch,
                        const std::vector<int>& rows, Task task, JointGrads* grads) {
  const std::vector<int> all = rows.empty() ? all_rows(batch) : rows;
  if (all.empty()) throw std::invalid_argument("single_task_loss: empty batch");
  if (!model.has(task))
    throw std::invalid_argument(std::string("single_task_loss: no head for ") + task_name(task));
  if (batch.labels.count(task) == 0)
    throw std::invalid_argument(std::string("single_task_loss: batch carries no ") +
                                task_name(task) + " labels");

  if (grads != nullptr) grads->set_zero();
  double sum = 0.0;
  EncoderCache cache;
  for (int r : all) {
    const std::vector<int> ids = row_ids(batch, r);
    const std::vector<uint8_t> mask(ids.size(), 1);
    const Mat& h = encoder_forward(model.encoder, ids, mask, false, nullptr, cache);
    Mat dH;
    Mat* dH_ptr = nullptr;
    if (grads != nullptr) {
      dH = Mat::Zero(h.rows(), h.cols());
      dH_ptr = &dH;
    }
    sum += head_loss_for_sentence(model.heads.at(task), h, row_gold(batch, task, r), 1.0,
                                  dH_ptr, grads != nullptr ? &grads->heads.at(task) : nullptr);
    if (grads != nullptr) encoder_backward(model.encoder, cache, dH, grads->encoder);
  }
  const double inv = 1.0 / static_cast<double>(all.size());
  if (grads != nullptr) {
    grads->encoder.scale(inv);
    for (auto& [t, g] : grads->heads) {
      (void)t;
      g.scale(inv);
    }
  }
  return sum * inv;
}

AdamState AdamState::init(const std::vector<TensorRef>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const TensorRef& p : params) {
    st.m.push_back(Vec::Zero(p.size()));
    st.v.push_back(Vec::Zero(p.size()));
    st.names.push_back(p.name);
  }
  return st;
}

void adam_step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: tensor list size mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size() || params[t].size() != state.m[t].size())
      throw std::invalid_argument("adam_step: shape mismatch for " + params[t].name);
    if (params[t].name != state.names[t])
      throw std::invalid_argument("adam_step: state built for " + state.names[t] + ", got " +
                                  params[t].name);
    double* p = params[t].data;
    const double* g = grads[t].data;
    double* m = state.m[t].data();
    double* v = state.v[t].data();
    for (Eigen::Index i = 0; i < params[t].size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

std::vector<std::vector<int>> decode_task(const JointModel& model, const EncodedBatch& batch,
                                          Task task, int num_threads) {
  if (!model.has(task))
    throw std::invalid_argument(std::string("decode_task: no head for ") + task_name(task));
  const CrfHead& head = model.heads.at(task);
  const int n = static_cast<int>(batch.lengths.size());
  std::vector<std::vector<int>> out(static_cast<size_t>(n));

  auto decode_row = [&](int r, EncoderCache& cache) {
    const std::vector<int> ids = row_ids(batch, r);
    const std::vector<uint8_t> mask(ids.size(), 1);
    const Mat& h = encoder_forward(model.encoder, ids, mask, false, nullptr, cache);
    Mat e = emissions(head, h);
    out[static_cast<size_t>(r)] = viterbi(e, head.T, head.s, head.e).path;
  };

  const int workers = std::clamp(num_threads, 1, 64);
  if (workers == 1 || n < 2) {
    EncoderCache cache;
    for (int r = 0; r < n; ++r) decode_row(r, cache);
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      EncoderCache cache;
      for (int r = w; r < n; r += workers) decode_row(r, cache);
    });
  for (std::thread& th : pool) th.join();
  return out;
}

std::vector<std::vector<int>> gold_labels(const EncodedBatch& batch, Task task) {
  if (batch.labels.count(task) == 0)
    throw std::invalid_argument(std::string("gold_labels: batch carries no ") + task_name(task) +
                                " labels");
  std::vector<std::vector<int>> out;
  out.reserve(batch.lengths.size());
  for (size_t r = 0; r < batch.lengths.size(); ++r)
    out.push_back(row_gold(batch, task, static_cast<int>(r)));
  return out;
}

TrainResult train(const JointModel& model, const std::vector<Sentence>& train_split,
                  const std::vector<Sentence>& dev_split, const TrainConfig& cfg) {
  cfg.validate();
  if (train_split.empty() || dev_split.empty())
    throw std::invalid_argument("train: train and dev splits must be non-empty");
  for (Task t : cfg.aux_tasks)
    if (!model.has(t))
      throw std::invalid_argument(std::string("train: config enables aux task ") + task_name(t) +
                                  " but the model has no such head");

  TrainResult res;
  res.model = model;
  if (cfg.epochs == 0) return res;

  const int max_len = model.encoder.cfg.max_len;
  const EncodedBatch train_batch = encode_batch(train_split, model.tagsets, model.vocab, max_len);
  const EncodedBatch dev_batch = encode_batch(dev_split, model.tagsets, model.vocab, max_len);
  const auto dev_gold = gold_labels(dev_batch, Task::Disfl);
  const int positive = model.tagsets.at(Task::Disfl).index_of("D");

  JointModel work = model;
  JointGrads grads = JointGrads::zeros_like(work);
  const auto param_refs = work.tensors();
  const auto grad_refs = grads.tensors();
  AdamState adam = AdamState::init(param_refs);

  Rng root(static_cast<uint64_t>(cfg.seed));
  Rng shuffle_rng(root.fork(0));
  Rng dropout_rng(root.fork(1));

  const int n = static_cast<int>(train_split.size());
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int stop = std::min(n, start + cfg.batch_size);
      const std::vector<int> rows(order.begin() + start, order.begin() + stop);
      const TaskLosses losses = joint_loss(work, train_batch, rows, cfg.alpha, cfg.aux_tasks,
                                           true, &dropout_rng, &grads);
      if (!std::isfinite(losses.total))
        throw std::runtime_error("training diverged: non-finite loss in epoch " +
                                 std::to_string(epoch));
      loss_sum += losses.total * static_cast<double>(rows.size());
      clip_global_norm(grad_refs, cfg.grad_clip_norm);
      adam_step(param_refs, grad_refs, adam, cfg.learning_rate, cfg.beta1, cfg.beta2,
                cfg.adam_eps);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.dev = token_prf(decode_task(work, dev_batch, Task::Disfl), dev_gold, positive);
    res.log.push_back(rec);

    if (epoch == 1 || rec.dev.f1 > res.best_dev_f1) {
      res.best_dev_f1 = rec.dev.f1;
      res.best_epoch = epoch;
      res.model = work;
    }
  }
  return res;
}

SweepResult alpha_sweep(const EncoderConfig& enc_cfg, const TrainConfig& base,
                        const std::vector<double>& alphas, const std::vector<int>& seeds,
                        const std::vector<Sentence>& train_split,
                        const std::vector<Sentence>& dev_split) {
  if (alphas.empty()) throw std::invalid_argument("alpha_sweep: no alphas given");
  if (seeds.empty()) throw std::invalid_argument("alpha_sweep: no seeds given");

  SweepResult sweep;
  double best_mean = -1.0;
  for (double alpha : alphas) {
    double f1_sum = 0.0;
    for (int seed : seeds) {
      TrainConfig cfg = base;
      cfg.alpha = alpha;
      cfg.seed = seed;
      SweepRow row;
      row.alpha = alpha;
      row.seed = seed;
      try {
        JointModel model =
            build_model(enc_cfg, train_split, cfg.aux_tasks, static_cast<uint64_t>(seed));
        TrainResult tr = train(model, train_split, dev_split, cfg);
        if (tr.best_epoch > 0) row.dev = tr.log[static_cast<size_t>(tr.best_epoch - 1)].dev;
      } catch (const std::exception& e) {
        throw std::runtime_error("alpha=" + fixed6(alpha) + " seed=" + std::to_string(seed) +
                                 ": " + e.what());
      }
      f1_sum += row.dev.f1;
      sweep.rows.push_back(row);
    }
    const double mean = f1_sum / static_cast<double>(seeds.size());
    if (mean > best_mean || (mean == best_mean && alpha < sweep.best_alpha)) {
      best_mean = mean;
      sweep.best_alpha = alpha;
    }
  }
  return sweep;
}

void write_sweep_csv(std::ostream& out, const SweepResult& sweep) {
  out << "alpha,seed,dev_f1,dev_precision,dev_recall\n";
  for (const SweepRow& row : sweep.rows)
    out << fixed6(row.alpha) << ',' << row.seed << ',' << fixed6(row.dev.f1) << ','
        << fixed6(row.dev.precision) << ',' << fixed6(row.dev.recall) << '\n';
}

double grad_check_encoder_crf(const EncoderConfig& cfg, uint64_t seed) {
  EncoderConfig check_cfg = cfg;
  check_cfg.dropout_rate = 0.0;
  if (check_cfg.vocab_size < 2) check_cfg.vocab_size = 7;

  std::vector<std::string> words = {"<pad>", "<unk>"};
  for (int i = 2; i < check_cfg.vocab_size; ++i) words.push_back("w" + std::to_string(i));
  const Vocab vocab = Vocab::from_words(words);

  std::map<Task, Tagset> tagsets;
  tagsets.emplace(Task::Disfl, Tagset::disfl());
  JointModel model = JointModel::init(check_cfg, vocab, tagsets, seed);

  Rng rng(seed ^ 0x5eedu);
  const int n = std::min(4, check_cfg.max_len);
  EncodedBatch batch;
  batch.width = n;
  batch.lengths = {n};
  batch.token_ids.emplace_back();
  batch.mask.emplace_back(static_cast<size_t>(n), 1);
  std::vector<int>& ids = batch.token_ids.back();
  std::vector<int> gold;
  for (int i = 0; i < n; ++i) {
    ids.push_back(rng.uniform_int(check_cfg.vocab_size));
    gold.push_back(rng.uniform_int(2));
  }
  batch.labels[Task::Disfl].push_back(gold);

  JointGrads grads = JointGrads::zeros_like(model);
  single_task_loss(model, batch, {}, Task::Disfl, &grads);
  auto loss = [&]() { return single_task_loss(model, batch, {}, Task::Disfl, nullptr); };
  // Same floor as grad_check_encoder: the attention key bias has an exactly
  // zero gradient, so finite differences along it are pure roundoff.
  return max_relative_grad_error(model.tensors(), grads.tensors(), loss,
                                 1e-5, 1e-5);
}

}  // namespace dfl

// pdaf/network.hpp

// Copyright 2026  PDAF authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef PDAF_NETWORK_HPP_
#define PDAF_NETWORK_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pdaf/attention.hpp"
#include "pdaf/common.hpp"
#include "pdaf/optim.hpp"
#include "pdaf/phonetics.hpp"
#include "pdaf/priors.hpp"
#include "pdaf/tensor.hpp"

namespace pdaf {

// Speaker embedding extractor built from the debiased attention stack.
// Frames go through the attention blocks, attentive statistics pooling, a
// linear projection to the embedding width, batchnorm and relu. The relu
// output is the speaker embedding. A linear softmax classifier sits on top
// during training only.
struct ModelConfig {
  BlockConfig block;
  int64_t n_mels = 128;  // must equal block.d_model, there is no input projection
  int64_t d_emb = 1024;
  int64_t n_speakers = 0;  // set from the training data
  EstimatorKind estimator = EstimatorKind::kPop;
  double lambda = 1.0;
  uint64_t seed = 7;
  // Artifact bookkeeping, hex digests set by the pipeline. Empty means unset.
  std::string fingerprint;
  std::string feature_fingerprint;

  void validate() const {
    block.validate();
    if (n_mels != block.d_model) {
      throw ValidationError("ModelConfig: n_mels (" + std::to_string(n_mels) +
                            ") must equal d_model (" + std::to_string(block.d_model) +
                            "), frames feed the first block directly");
    }
    if (d_emb < 1) throw ValidationError("ModelConfig: d_emb must be positive");
    if (n_speakers < 2) {
      throw ValidationError("ModelConfig: need at least 2 speakers, got " +
                            std::to_string(n_speakers));
    }
    if (!std::isfinite(lambda) || lambda < 0.0) {
      throw ValidationError("ModelConfig: lambda must be finite and >= 0");
    }
  }
};

struct TrainConfig {
  double lr = 0.001;
  int halve_every = 4;      // epochs between learning rate halvings
  int warmup_steps = 2000;  // linear ramp, 0 disables
  double weight_decay = 1e-7;
  int batch_size = 100;
  int epochs = 30;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("TrainConfig: lr must be > 0");
    if (halve_every < 1) throw ValidationError("TrainConfig: halve_every must be >= 1");
    if (warmup_steps < 0) throw ValidationError("TrainConfig: warmup_steps must be >= 0");
    if (weight_decay < 0.0) throw ValidationError("TrainConfig: weight_decay must be >= 0");
    if (batch_size < 2) throw ValidationError("TrainConfig: batch_size must be >= 2 for batchnorm");
    if (epochs < 1) throw ValidationError("TrainConfig: epochs must be >= 1");
  }
};

// One utterance ready for the model: cached features plus frame labels from
// the alignment. Segments are kept so per-utterance priors can be recounted.
struct Utterance {
  std::string utt;
  std::string speaker;
  int speaker_idx = -1;
  Tensor features;  // [T x n_mels], constant
  std::vector<int> labels;
  std::vector<AlignmentSegment> segments;
};

class PdafModel {
 public:
  ModelConfig cfg;
  std::vector<BlockParams> blocks;
  PoolParams pool;
  Tensor emb_w;     // [2*d_model x d_emb]
  Tensor emb_b;     // [d_emb]
  Tensor bn_gamma;  // [d_emb]
  Tensor bn_beta;   // [d_emb]
  BatchNormState bn_state;
  Tensor cls_w;  // [d_emb x n_speakers]
  Tensor cls_b;  // [n_speakers]
  // Per-phoneme key bias logits, trained only for the learned estimator but
  // always allocated so every checkpoint has the same section list.
  Tensor prior_logits;  // [inventory size]
  std::vector<std::string> speakers;  // class index -> speaker id
  Rng rng{0};

  static PdafModel init(const ModelConfig &cfg, const std::vector<std::string> &speakers) {
    ModelConfig c = cfg;
    c.n_speakers = static_cast<int64_t>(speakers.size());
    c.validate();
    PdafModel m;
    m.cfg = c;
    m.speakers = speakers;
    m.rng = Rng(c.seed);
    for (int b = 0; b < c.block.n_blocks; ++b) m.blocks.push_back(BlockParams::init(m.rng, c.block));
    m.pool = PoolParams::init(m.rng, static_cast<int>(c.block.d_model));
    m.emb_w = scaled_uniform_init(m.rng, 2 * c.block.d_model, c.d_emb);
    m.emb_b = Tensor::zeros({c.d_emb}, /*requires_grad=*/true);
    m.bn_gamma = Tensor::full({c.d_emb}, 1.0, /*requires_grad=*/true);
    m.bn_beta = Tensor::zeros({c.d_emb}, /*requires_grad=*/true);
    m.bn_state = BatchNormState::init(c.d_emb);
    m.cls_w = scaled_uniform_init(m.rng, c.d_emb, c.n_speakers);
    m.cls_b = Tensor::zeros({c.n_speakers}, /*requires_grad=*/true);
    m.prior_logits =
        Tensor::zeros({static_cast<int64_t>(PhonemeInventory::kSize)}, /*requires_grad=*/true);
    return m;
  }

  // Fixed serialization order. Changing it breaks every saved checkpoint.
  std::vector<Tensor> all_params() const {
    std::vector<Tensor> out;
    for (const BlockParams &b : blocks) {
      std::vector<Tensor> bp = b.all_params();
      out.insert(out.end(), bp.begin(), bp.end());
    }
    out.push_back(pool.score_w);
    out.push_back(emb_w);
    out.push_back(emb_b);
    out.push_back(bn_gamma);
    out.push_back(bn_beta);
    out.push_back(cls_w);
    out.push_back(cls_b);
    out.push_back(prior_logits);
    return out;
  }

  std::vector<Tensor> trainable_params() const {
    std::vector<Tensor> out = all_params();
    if (cfg.estimator != EstimatorKind::kLearned) out.pop_back();  // prior_logits stays frozen
    return out;
  }

  int speaker_index(const std::string &speaker) const {
    auto it = std::find(speakers.begin(), speakers.end(), speaker);
    if (it == speakers.end()) throw ValidationError("unknown speaker id: " + speaker);
    return static_cast<int>(it - speakers.begin());
  }
};

// Additive key bias for one utterance at the given phase. Counting estimators
// produce a constant vector; the learned estimator reads its logits through a
// gather so gradients reach them. Dataset-level estimators swap to their
// per-utterance counterpart outside training, which needs no corpus table.
inline Tensor utterance_debias(const PdafModel &m, const Utterance &u, Phase phase,
                               const PriorTable *corpus_table) {
  const int64_t t_len = static_cast<int64_t>(u.labels.size());
  const EstimatorKind eff = effective_estimator(m.cfg.estimator, phase);
  switch (eff) {
    case EstimatorKind::kBaseline:
      return Tensor::zeros({t_len});
    case EstimatorKind::kLearned:
      return gather(m.prior_logits, u.labels);
    case EstimatorKind::kPop:
    case EstimatorKind::kPfp: {
      if (corpus_table == nullptr) {
        throw ValidationError("utterance_debias: dataset-level estimator needs a corpus table");
      }
      if (corpus_table->estimator != eff) {
        throw ValidationError("utterance_debias: corpus table was built with estimator " +
                              estimator_name(corpus_table->estimator) + ", expected " +
                              estimator_name(eff));
      }
      return Tensor::from_data({t_len}, frame_bias(*corpus_table, u.labels, m.cfg.lambda));
    }
    case EstimatorKind::kPup:
      return Tensor::from_data({t_len}, frame_bias(pup(u.segments), u.labels, m.cfg.lambda));
    case EstimatorKind::kFup:
      return Tensor::from_data({t_len}, frame_bias(fup(u.labels), u.labels, m.cfg.lambda));
  }
  throw Error("utterance_debias: unreachable");
}

// Attention stack plus pooling for one utterance, [1 x 2*d_model].
inline Tensor utterance_pooled(const PdafModel &m, const Utterance &u,
                               const std::vector<bool> &attendable, const Tensor &debias) {
  if (u.features.cols() != m.cfg.n_mels) {
    throw DimensionError("utterance " + u.utt + ": feature width " +
                         std::to_string(u.features.cols()) + " does not match model n_mels " +
                         std::to_string(m.cfg.n_mels));
  }
  Tensor h = debiased_attention_stack(u.features, attendable, debias, m.blocks, m.cfg.block);
  return attentive_stats_pool(h, attendable, m.pool);
}

// Pooled rows -> embeddings. The relu output is the speaker embedding.
inline Tensor embedding_head(PdafModel &m, const Tensor &pooled, Phase phase) {
  Tensor z = add(matmul(pooled, m.emb_w), m.emb_b);
  z = batchnorm(z, m.bn_gamma, m.bn_beta, m.bn_state, phase);
  return relu(z);
}

inline Tensor classifier_logits(const PdafModel &m, const Tensor &embeddings) {
  return add(matmul(embeddings, m.cls_w), m.cls_b);
}

// Inference-mode embedding of a single utterance. An optional ablation set
// removes those phonemes from the attendable keys; masking every remaining
// frame raises ValidationError, callers decide whether to skip or fail.
inline std::vector<double> embed_utterance(PdafModel &m, const Utterance &u,
                                           const std::set<int> &ablate = {}) {
  const std::vector<bool> attendable = build_key_mask(u.labels, ablate);
  const Tensor debias = utterance_debias(m, u, Phase::kInfer, nullptr);
  const Tensor pooled = utterance_pooled(m, u, attendable, debias);
  const Tensor emb = embedding_head(m, pooled, Phase::kInfer);
  return emb.data();
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "PDAF-CK1";  // 8 bytes on disk
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json model_config_to_json(const ModelConfig &c) {
  return nlohmann::json{{"d_model", c.block.d_model}, {"n_heads", c.block.n_heads},
                        {"d_k", c.block.d_k},         {"d_v", c.block.d_v},
                        {"d_ff", c.block.d_ff},       {"n_blocks", c.block.n_blocks},
                        {"n_mels", c.n_mels},         {"d_emb", c.d_emb},
                        {"n_speakers", c.n_speakers}, {"estimator", estimator_name(c.estimator)},
                        {"lambda", c.lambda},         {"seed", c.seed},
                        {"fingerprint", c.fingerprint},
                        {"feature_fingerprint", c.feature_fingerprint}};
}

inline ModelConfig model_config_from_json(const nlohmann::json &j) {
  ModelConfig c;
  try {
    c.block.d_model = j.at("d_model").get<int64_t>();
    c.block.n_heads = j.at("n_heads").get<int>();
    c.block.d_k = j.at("d_k").get<int64_t>();
    c.block.d_v = j.at("d_v").get<int64_t>();
    c.block.d_ff = j.at("d_ff").get<int64_t>();
    c.block.n_blocks = j.at("n_blocks").get<int>();
    c.n_mels = j.at("n_mels").get<int64_t>();
    c.d_emb = j.at("d_emb").get<int64_t>();
    c.n_speakers = j.at("n_speakers").get<int64_t>();
    c.estimator = parse_estimator(j.at("estimator").get<std::string>());
    c.lambda = j.at("lambda").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.fingerprint = j.value("fingerprint", "");
    c.feature_fingerprint = j.value("feature_fingerprint", "");
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("checkpoint config: ") + e.what());
  }
  return c;
}

inline void write_tensor_blob(std::ostream &os, const Tensor &t) {
  io::write_le<uint32_t>(os, static_cast<uint32_t>(t.shape().size()));
  for (int64_t d : t.shape()) io::write_le<int64_t>(os, d);
  for (double v : t.data()) io::write_le<double>(os, v);
}

inline std::vector<double> read_tensor_blob(std::istream &is, const Shape &expect,
                                            const std::string &what) {
  const uint32_t ndim = io::read_le<uint32_t>(is, what + " ndim");
  Shape shape(ndim);
  for (uint32_t i = 0; i < ndim; ++i) shape[i] = io::read_le<int64_t>(is, what + " dim");
  if (shape != expect) {
    throw ParseError("checkpoint: " + what + " has shape " + shape_str(shape) + ", expected " +
                     shape_str(expect));
  }
  std::vector<double> values(static_cast<size_t>(shape_numel(shape)));
  for (double &v : values) v = io::read_le<double>(is, what + " data");
  return values;
}

}  // namespace detail

inline void save_checkpoint(const PdafModel &m, const std::string &path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, 8);
  io::write_le<uint32_t>(os, kCheckpointVersion);
  io::write_string(os, detail::model_config_to_json(m.cfg).dump());
  const std::vector<std::string> symbols = PhonemeInventory::get().symbols();
  io::write_le<uint32_t>(os, static_cast<uint32_t>(symbols.size()));
  for (const std::string &s : symbols) io::write_string(os, s);
  io::write_le<uint32_t>(os, static_cast<uint32_t>(m.speakers.size()));
  for (const std::string &s : m.speakers) io::write_string(os, s);
  const std::vector<Tensor> params = m.all_params();
  io::write_le<uint32_t>(os, static_cast<uint32_t>(params.size()));
  for (const Tensor &t : params) detail::write_tensor_blob(os, t);
  io::write_le<uint32_t>(os, static_cast<uint32_t>(m.bn_state.running_mean.size()));
  for (double v : m.bn_state.running_mean) io::write_le<double>(os, v);
  for (double v : m.bn_state.running_var) io::write_le<double>(os, v);
  io::write_string(os, m.rng.state());
  if (!os) throw Error("checkpoint write failed: " + path);
}

inline PdafModel load_checkpoint(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (is.gcount() != 8 || std::string(magic, 8) != std::string(kCheckpointMagic, 8)) {
    throw VersionError("not a checkpoint file (bad magic): " + path);
  }
  const uint32_t version = io::read_le<uint32_t>(is, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json cfg_json;
  try {
    cfg_json = nlohmann::json::parse(io::read_string(is, "checkpoint config"));
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("checkpoint config: ") + e.what());
  }
  const ModelConfig cfg = detail::model_config_from_json(cfg_json);
  cfg.validate();

  const uint32_t n_symbols = io::read_le<uint32_t>(is, "inventory size");
  const std::vector<std::string> current = PhonemeInventory::get().symbols();
  if (n_symbols != current.size()) {
    throw Error("checkpoint phoneme inventory has " + std::to_string(n_symbols) +
                " symbols, this build expects " + std::to_string(current.size()));
  }
  for (uint32_t i = 0; i < n_symbols; ++i) {
    const std::string s = io::read_string(is, "inventory symbol");
    if (s != current[i]) {
      throw Error("checkpoint phoneme inventory mismatch at index " + std::to_string(i) + ": " +
                  s + " vs " + current[i]);
    }
  }

  const uint32_t n_speakers = io::read_le<uint32_t>(is, "speaker count");
  std::vector<std::string> speakers(n_speakers);
  for (auto &s : speakers) s = io::read_string(is, "speaker id");
  if (static_cast<int64_t>(n_speakers) != cfg.n_speakers) {
    throw ParseError("checkpoint speaker list length does not match config");
  }

  PdafModel m = PdafModel::init(cfg, speakers);
  const std::vector<Tensor> params = m.all_params();
  const uint32_t n_tensors = io::read_le<uint32_t>(is, "tensor count");
  if (n_tensors != params.size()) {
    throw ParseError("checkpoint holds " + std::to_string(n_tensors) + " tensors, model needs " +
                     std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i];
    std::vector<double> values =
        detail::read_tensor_blob(is, t.shape(), "tensor " + std::to_string(i));
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  }
  const uint32_t bn_dim = io::read_le<uint32_t>(is, "batchnorm dim");
  if (static_cast<int64_t>(bn_dim) != cfg.d_emb) {
    throw ParseError("checkpoint batchnorm width does not match d_emb");
  }
  for (double &v : m.bn_state.running_mean) v = io::read_le<double>(is, "batchnorm mean");
  for (double &v : m.bn_state.running_var) v = io::read_le<double>(is, "batchnorm var");
  m.rng.set_state(io::read_string(is, "rng state"));
  return m;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;
  double lr_mult = 0.0;  // multiplier applied on the last step of the epoch
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  double best_loss = 0.0;
  int best_epoch = -1;
  std::string best_path;  // empty when checkpointing is disabled
};

namespace detail {

// Speakers with a single utterance cannot support verification trials and
// destabilize the classifier, reject them up front.
inline void validate_train_set(const std::vector<Utterance> &data, const PdafModel &m) {
  if (data.size() < 2) throw ValidationError("training needs at least 2 utterances");
  std::map<int, int> counts;
  for (const Utterance &u : data) {
    if (u.speaker_idx < 0 || u.speaker_idx >= static_cast<int>(m.speakers.size())) {
      throw ValidationError("utterance " + u.utt + " has no speaker index");
    }
    ++counts[u.speaker_idx];
  }
  if (counts.size() < 2) throw ValidationError("training needs at least 2 distinct speakers");
  for (const auto &[idx, n] : counts) {
    if (n < 2) {
      throw ValidationError("speaker " + m.speakers[static_cast<size_t>(idx)] + " has " +
                            std::to_string(n) + " utterance(s), need at least 2");
    }
  }
}

}  // namespace detail

// Runs the optimizer over the dataset. Dataset-level estimators take their
// corpus table through corpus_table; per-utterance and baseline runs pass
// nullptr. out_dir empty disables checkpoint files. Metrics go out as one
// JSON object per epoch. A non-finite value anywhere in the batch graph
// aborts with the utterance ids and learning rate of the failing batch.
inline TrainResult train_model(PdafModel &m, std::vector<Utterance> &data, const TrainConfig &tc,
                               const PriorTable *corpus_table, const std::string &out_dir = "",
                               std::ostream *metrics = nullptr, std::ostream *log = nullptr) {
  tc.validate();
  m.cfg.validate();
  detail::validate_train_set(data, m);

  const int64_t steps_per_epoch =
      (static_cast<int64_t>(data.size()) + tc.batch_size - 1) / tc.batch_size;
  const int64_t total_steps = steps_per_epoch * tc.epochs;
  if (tc.warmup_steps > total_steps) {
    throw ValidationError("warmup_steps (" + std::to_string(tc.warmup_steps) +
                          ") exceeds total optimizer steps (" + std::to_string(total_steps) + ")");
  }

  // Constant key biases never change across epochs, build them once.
  std::vector<Tensor> static_debias;
  const bool learned = m.cfg.estimator == EstimatorKind::kLearned;
  if (!learned) {
    static_debias.reserve(data.size());
    for (const Utterance &u : data) {
      static_debias.push_back(utterance_debias(m, u, Phase::kTrain, corpus_table));
    }
  }
  std::vector<std::vector<bool>> masks;
  masks.reserve(data.size());
  for (const Utterance &u : data) masks.push_back(build_key_mask(u.labels));

  AdamConfig ac;
  ac.lr = tc.lr;
  ac.weight_decay = tc.weight_decay;
  Adam opt(ac);
  for (const Tensor &p : m.trainable_params()) opt.add_param(p);

  TrainResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int64_t global_step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    m.rng.shuffle(order);

    // Pre-slice batches; a trailing singleton joins the previous batch so
    // batchnorm always sees at least two rows.
    std::vector<std::pair<size_t, size_t>> batches;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(tc.batch_size)) {
      batches.emplace_back(begin,
                           std::min(order.size(), begin + static_cast<size_t>(tc.batch_size)));
    }
    if (batches.size() > 1 && batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }

    double loss_sum = 0.0;
    int64_t correct = 0;
    int64_t seen = 0;
    double lr_mult = 0.0;
    for (const auto &[begin, end] : batches) {
      ++global_step;
      lr_mult = lr_schedule(global_step, tc.warmup_steps, epoch, tc.halve_every);
      std::vector<size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                order.begin() + static_cast<std::ptrdiff_t>(end));
      auto batch_ids = [&]() {
        std::string ids;
        for (size_t i : batch) ids += (ids.empty() ? "" : ", ") + data[i].utt;
        return ids;
      };
      try {
        std::vector<Tensor> pooled_rows;
        std::vector<int> targets;
        pooled_rows.reserve(batch.size());
        for (size_t i : batch) {
          const Tensor debias =
              learned ? utterance_debias(m, data[i], Phase::kTrain, nullptr) : static_debias[i];
          pooled_rows.push_back(utterance_pooled(m, data[i], masks[i], debias));
          targets.push_back(data[i].speaker_idx);
        }
        Tensor pooled = concat(pooled_rows, 0);  // [B x 2*d_model]
        Tensor emb = embedding_head(m, pooled, Phase::kTrain);
        Tensor logits = classifier_logits(m, emb);
        Tensor loss = cross_entropy_mean(logits, targets);
        const double loss_v = loss.at(0);
        if (!std::isfinite(loss_v)) throw NumericError("loss is not finite");

        opt.zero_grad();
        loss.backward();
        opt.step(lr_mult);

        loss_sum += loss_v * static_cast<double>(batch.size());
        for (size_t r = 0; r < batch.size(); ++r) {
          int64_t arg = 0;
          for (int64_t c = 1; c < logits.cols(); ++c) {
            if (logits.at(static_cast<int64_t>(r), c) > logits.at(static_cast<int64_t>(r), arg)) {
              arg = c;
            }
          }
          if (static_cast<int>(arg) == targets[r]) ++correct;
        }
        seen += static_cast<int64_t>(batch.size());
      } catch (const NumericError &e) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(global_step) + " (lr_mult " + std::to_string(lr_mult) +
                           ", batch: " + batch_ids() + "): " + e.what());
      }
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.mean_loss = loss_sum / static_cast<double>(seen);
    em.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    em.lr_mult = lr_mult;
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.epochs.push_back(em);
    if (metrics != nullptr) {
      *metrics << nlohmann::json{{"epoch", em.epoch},
                                 {"loss", em.mean_loss},
                                 {"accuracy", em.accuracy},
                                 {"lr_mult", em.lr_mult},
                                 {"seconds", em.seconds}}
                      .dump()
               << "\n";
      metrics->flush();
    }
    if (log != nullptr) {
      *log << "epoch " << em.epoch << "  loss " << em.mean_loss << "  acc " << em.accuracy
           << "  lr_mult " << em.lr_mult << "  (" << em.seconds << " s)\n";
    }
    if (!out_dir.empty()) save_checkpoint(m, out_dir + "/last.ckpt");
    if (em.mean_loss < result.best_loss) {
      result.best_loss = em.mean_loss;
      result.best_epoch = epoch;
      if (!out_dir.empty()) {
        result.best_path = out_dir + "/best.ckpt";
        save_checkpoint(m, result.best_path);
      }
    }
  }
  return result;
}

}  // namespace pdaf

#endif  // PDAF_NETWORK_HPP_

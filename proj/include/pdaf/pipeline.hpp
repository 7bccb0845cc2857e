// pdaf/pipeline.hpp

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

#ifndef PDAF_PIPELINE_HPP_
#define PDAF_PIPELINE_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdaf/common.hpp"
#include "pdaf/eval.hpp"
#include "pdaf/features.hpp"
#include "pdaf/network.hpp"
#include "pdaf/phonetics.hpp"
#include "pdaf/priors.hpp"
#include "pdaf/wav.hpp"

namespace pdaf {

// One configuration drives every stage. A run is reproducible from this
// struct alone: all randomness forks off seed, and two fingerprints guard
// against mixing artifacts. The feature fingerprint covers only what shapes
// the cached features; the full fingerprint additionally covers model and
// optimizer settings, so features survive an estimator sweep but a trained
// model never silently pairs with features from another configuration.
struct RunConfig {
  std::string corpus_dir;
  std::string work_dir = ".";
  FbankConfig fbank;
  BlockConfig block;
  int64_t d_emb = 1024;
  EstimatorKind estimator = EstimatorKind::kPop;
  double lambda = 1.0;
  uint64_t seed = 7;
  TrainConfig train;

  std::string feature_fingerprint() const {
    std::ostringstream os;
    os.precision(17);
    os << "fb1|n_mels=" << fbank.n_mels << "|win_ms=" << fbank.win_ms
       << "|hop_ms=" << fbank.hop_ms << "|fmin=" << fbank.mel_fmin << "|fmax=" << fbank.mel_fmax
       << "|floor=" << fbank.log_floor;
    return hash_hex(fnv1a64(os.str()));
  }

  std::string model_fingerprint() const {
    std::ostringstream os;
    os.precision(17);
    os << feature_fingerprint() << "|d_model=" << block.d_model << "|n_heads=" << block.n_heads
       << "|d_k=" << block.d_k << "|d_v=" << block.d_v << "|d_ff=" << block.d_ff
       << "|n_blocks=" << block.n_blocks << "|d_emb=" << d_emb
       << "|estimator=" << estimator_name(estimator) << "|lambda=" << lambda << "|seed=" << seed
       << "|lr=" << train.lr << "|halve_every=" << train.halve_every
       << "|warmup=" << train.warmup_steps << "|wd=" << train.weight_decay
       << "|batch=" << train.batch_size << "|epochs=" << train.epochs;
    return hash_hex(fnv1a64(os.str()));
  }

  ModelConfig model_config() const {
    ModelConfig mc;
    mc.block = block;
    mc.n_mels = fbank.n_mels;
    mc.d_emb = d_emb;
    mc.estimator = estimator;
    mc.lambda = lambda;
    mc.seed = seed;
    mc.fingerprint = model_fingerprint();
    mc.feature_fingerprint = feature_fingerprint();
    return mc;
  }
};

// Plain-text "key = value" configuration, one entry per line, '#' comments.
// Unknown keys are rejected so typos cannot silently fall back to defaults.
inline void apply_config_entry(RunConfig &rc, const std::string &key, const std::string &value) {
  auto as_i64 = [&](const std::string &v) {
    try {
      size_t pos = 0;
      const long long r = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return static_cast<int64_t>(r);
    } catch (const std::exception &) {
      throw ValidationError("config: " + key + " wants an integer, got '" + v + "'");
    }
  };
  auto as_f64 = [&](const std::string &v) {
    try {
      size_t pos = 0;
      const double r = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception &) {
      throw ValidationError("config: " + key + " wants a number, got '" + v + "'");
    }
  };

  if (key == "corpus_dir") rc.corpus_dir = value;
  else if (key == "work_dir") rc.work_dir = value;
  else if (key == "seed") rc.seed = static_cast<uint64_t>(as_i64(value));
  else if (key == "estimator") rc.estimator = parse_estimator(value);
  else if (key == "lambda") rc.lambda = as_f64(value);
  else if (key == "n_mels") rc.fbank.n_mels = as_i64(value);
  else if (key == "win_ms") rc.fbank.win_ms = as_f64(value);
  else if (key == "hop_ms") rc.fbank.hop_ms = as_f64(value);
  else if (key == "mel_fmin") rc.fbank.mel_fmin = as_f64(value);
  else if (key == "mel_fmax") rc.fbank.mel_fmax = as_f64(value);
  else if (key == "d_model") rc.block.d_model = as_i64(value);
  else if (key == "n_heads") rc.block.n_heads = static_cast<int>(as_i64(value));
  else if (key == "d_k") rc.block.d_k = as_i64(value);
  else if (key == "d_v") rc.block.d_v = as_i64(value);
  else if (key == "d_ff") rc.block.d_ff = as_i64(value);
  else if (key == "n_blocks") rc.block.n_blocks = static_cast<int>(as_i64(value));
  else if (key == "d_emb") rc.d_emb = as_i64(value);
  else if (key == "lr") rc.train.lr = as_f64(value);
  else if (key == "halve_every") rc.train.halve_every = static_cast<int>(as_i64(value));
  else if (key == "warmup_steps") rc.train.warmup_steps = static_cast<int>(as_i64(value));
  else if (key == "weight_decay") rc.train.weight_decay = as_f64(value);
  else if (key == "batch_size") rc.train.batch_size = static_cast<int>(as_i64(value));
  else if (key == "epochs") rc.train.epochs = static_cast<int>(as_i64(value));
  else throw ValidationError("config: unknown key '" + key + "'");
}

inline void load_config_file(RunConfig &rc, const std::string &path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    const std::string stripped = strip(line);
    if (stripped.empty()) continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = strip(stripped.substr(0, eq));
    const std::string value = strip(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": empty key");
    }
    try {
      apply_config_entry(rc, key, value);
    } catch (const ValidationError &e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// Feature manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string utt;
  std::string speaker;
  std::string split;
  std::string path;  // feature cache file
  int64_t frames = 0;
  std::string wav_hash;
};

struct Manifest {
  std::string feature_fingerprint;
  uint64_t seed = 0;
  int64_t n_mels = 0;
  std::vector<ManifestEntry> utts;
};

inline std::string manifest_path(const RunConfig &rc) { return rc.work_dir + "/manifest.json"; }

inline void write_manifest(const std::string &path, const Manifest &m) {
  nlohmann::json jutts = nlohmann::json::array();
  for (const ManifestEntry &e : m.utts) {
    jutts.push_back({{"utt", e.utt},
                     {"speaker", e.speaker},
                     {"split", e.split},
                     {"path", e.path},
                     {"frames", e.frames},
                     {"wav_hash", e.wav_hash}});
  }
  const nlohmann::json j = {{"feature_fingerprint", m.feature_fingerprint},
                            {"seed", m.seed},
                            {"n_mels", m.n_mels},
                            {"utts", jutts}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write manifest: " + path);
  os << j.dump(2) << "\n";
}

inline Manifest read_manifest(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open manifest: " + path + " (run featurize first)");
  Manifest m;
  try {
    const nlohmann::json j = nlohmann::json::parse(is);
    m.feature_fingerprint = j.at("feature_fingerprint").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.n_mels = j.at("n_mels").get<int64_t>();
    for (const auto &ju : j.at("utts")) {
      ManifestEntry e;
      e.utt = ju.at("utt").get<std::string>();
      e.speaker = ju.at("speaker").get<std::string>();
      e.split = ju.at("split").get<std::string>();
      e.path = ju.at("path").get<std::string>();
      e.frames = ju.at("frames").get<int64_t>();
      e.wav_hash = ju.at("wav_hash").get<std::string>();
      m.utts.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception &e) {
    throw ParseError("manifest " + path + ": " + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Featurize
// ---------------------------------------------------------------------------

struct FeaturizeResult {
  Manifest manifest;
  std::vector<std::string> failures;  // "utt: reason"
  int n_computed = 0;
  int n_reused = 0;
};

// Computes log-mel features for the whole corpus into per-utterance cache
// files. A second run recomputes nothing as long as the wav bytes and the
// feature configuration are unchanged.
inline FeaturizeResult featurize_corpus(const RunConfig &rc, std::ostream *log = nullptr) {
  if (rc.corpus_dir.empty()) throw ValidationError("featurize: corpus_dir is not set");
  rc.fbank.validate();
  namespace fs = std::filesystem;
  const std::string corpus_json = rc.corpus_dir + "/corpus.json";
  std::ifstream cj(corpus_json);
  if (!cj) throw ValidationError("cannot open corpus description: " + corpus_json);
  nlohmann::json corpus;
  try {
    corpus = nlohmann::json::parse(cj);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(corpus_json + ": " + std::string(e.what()));
  }

  fs::create_directories(rc.work_dir + "/features");
  const std::string fp = rc.feature_fingerprint();

  // Previous manifest, if compatible, enables cache reuse.
  std::map<std::string, ManifestEntry> previous;
  if (fs::exists(manifest_path(rc))) {
    try {
      const Manifest old = read_manifest(manifest_path(rc));
      if (old.feature_fingerprint == fp) {
        for (const ManifestEntry &e : old.utts) previous[e.utt] = e;
      }
    } catch (const Error &) {
      // Unreadable manifest: recompute everything.
    }
  }

  struct Job {
    std::string utt, speaker, split, wav_path, cache;
    std::optional<ManifestEntry> entry;  // set on success
    std::string error;
    bool reused = false;
  };
  std::vector<Job> jobs;
  for (const auto &ju : corpus.at("utts")) {
    Job j;
    j.utt = ju.at("utt").get<std::string>();
    j.speaker = ju.at("speaker").get<std::string>();
    j.split = ju.at("split").get<std::string>();
    j.wav_path = rc.corpus_dir + "/wav/" + j.utt + ".wav";
    j.cache = rc.work_dir + "/features/" + j.utt + ".fb";
    jobs.push_back(std::move(j));
  }

  // Each job touches only its own files; PDAF_THREADS caps the pool.
  parallel_for(static_cast<int64_t>(jobs.size()), [&](int64_t i) {
    Job &j = jobs[static_cast<size_t>(i)];
    try {
      const std::string wav_hash = hash_hex(hash_file(j.wav_path));
      auto prev = previous.find(j.utt);
      if (prev != previous.end() && prev->second.wav_hash == wav_hash && fs::exists(j.cache)) {
        j.entry = prev->second;
        j.reused = true;
        return;
      }
      const Waveform wav = read_wav(j.wav_path);
      const FeatureMatrix fm = compute_fbank(wav, rc.fbank);
      write_feature_cache(j.cache, fm.frames);
      ManifestEntry e;
      e.utt = j.utt;
      e.speaker = j.speaker;
      e.split = j.split;
      e.path = j.cache;
      e.frames = fm.frames.rows();
      e.wav_hash = wav_hash;
      j.entry = std::move(e);
    } catch (const Error &err) {
      j.error = err.what();
    }
  });

  FeaturizeResult result;
  result.manifest.feature_fingerprint = fp;
  result.manifest.seed = rc.seed;
  result.manifest.n_mels = rc.fbank.n_mels;
  for (Job &j : jobs) {
    if (j.entry.has_value()) {
      result.manifest.utts.push_back(std::move(*j.entry));
      (j.reused ? result.n_reused : result.n_computed)++;
    } else {
      result.failures.push_back(j.utt + ": " + j.error);
      if (log != nullptr) *log << "featurize: " << j.utt << " failed: " << j.error << "\n";
    }
  }
  write_manifest(manifest_path(rc), result.manifest);
  if (log != nullptr) {
    *log << "featurize: " << result.n_computed << " computed, " << result.n_reused << " reused, "
         << result.failures.size() << " failed\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

// Loads cached features and frame labels for one split ("train", "test" or
// "all"). Every requested utterance must have an alignment.
inline std::vector<Utterance> load_utterances(const RunConfig &rc, const Manifest &manifest,
                                              const AlignmentMap &alignments,
                                              const std::string &split) {
  if (manifest.feature_fingerprint != rc.feature_fingerprint()) {
    throw ValidationError("manifest was built with feature fingerprint " +
                          manifest.feature_fingerprint + ", current configuration gives " +
                          rc.feature_fingerprint() + "; re-run featurize");
  }
  std::vector<Utterance> out;
  for (const ManifestEntry &e : manifest.utts) {
    if (split != "all" && e.split != split) continue;
    auto it = alignments.find(e.utt);
    if (it == alignments.end()) {
      throw ValidationError("no alignment for utterance " + e.utt);
    }
    Utterance u;
    u.utt = e.utt;
    u.speaker = e.speaker;
    u.features = read_feature_cache(e.path);
    if (u.features.rows() != e.frames) {
      throw ValidationError("feature cache for " + e.utt + " has " +
                            std::to_string(u.features.rows()) + " frames, manifest says " +
                            std::to_string(e.frames));
    }
    u.segments = it->second;
    u.labels = label_frames(u.segments, u.features.rows(), rc.fbank.hop_ms, rc.fbank.win_ms);
    out.push_back(std::move(u));
  }
  if (out.empty()) throw ValidationError("no utterances in split '" + split + "'");
  return out;
}

inline AlignmentMap load_alignments(const RunConfig &rc) {
  return parse_alignments_file(rc.corpus_dir + "/alignments.jsonl");
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainPipelineResult {
  TrainResult train;
  std::string model_path;
  std::vector<std::string> speakers;
};

// Builds the corpus prior table when the estimator needs one. Counting uses
// only the given (training) utterances.
inline std::optional<PriorTable> corpus_prior_table(EstimatorKind estimator,
                                                    const std::vector<Utterance> &train_set) {
  if (estimator == EstimatorKind::kPop || estimator == EstimatorKind::kPfp) {
    CorpusCounts counts;
    for (const Utterance &u : train_set) {
      counts.add_segments(u.segments);
      counts.add_labels(u.labels);
    }
    return estimator == EstimatorKind::kPop ? pop(counts) : pfp(counts);
  }
  return std::nullopt;
}

inline TrainPipelineResult train_pipeline(const RunConfig &rc, const std::string &out_model,
                                          std::ostream *log = nullptr) {
  const Manifest manifest = read_manifest(manifest_path(rc));
  const AlignmentMap alignments = load_alignments(rc);
  std::vector<Utterance> train_set = load_utterances(rc, manifest, alignments, "train");

  std::set<std::string> speaker_set;
  for (const Utterance &u : train_set) speaker_set.insert(u.speaker);
  std::vector<std::string> speakers(speaker_set.begin(), speaker_set.end());
  for (Utterance &u : train_set) {
    u.speaker_idx = static_cast<int>(
        std::lower_bound(speakers.begin(), speakers.end(), u.speaker) - speakers.begin());
  }

  ModelConfig mc = rc.model_config();
  mc.n_speakers = static_cast<int64_t>(speakers.size());
  PdafModel model = PdafModel::init(mc, speakers);

  const std::optional<PriorTable> table = corpus_prior_table(rc.estimator, train_set);
  std::filesystem::create_directories(rc.work_dir);
  std::ofstream metrics(rc.work_dir + "/metrics.jsonl", std::ios::trunc);
  if (!metrics) throw Error("cannot write metrics.jsonl in " + rc.work_dir);

  TrainPipelineResult result;
  result.speakers = speakers;
  result.train = train_model(model, train_set, rc.train, table ? &*table : nullptr, rc.work_dir,
                             &metrics, log);
  if (result.train.best_path.empty()) throw Error("training produced no checkpoint");
  std::filesystem::copy_file(result.train.best_path, out_model,
                             std::filesystem::copy_options::overwrite_existing);
  result.model_path = out_model;
  if (log != nullptr) {
    *log << "train: best epoch " << result.train.best_epoch << " (loss "
         << result.train.best_loss << ") -> " << out_model << "\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

struct EmbeddingSet {
  nlohmann::json header;
  std::vector<std::string> order;  // utterances in file order
  std::map<std::string, std::vector<double>> vectors;
  std::map<std::string, std::string> speaker_of;
  std::map<std::string, std::string> split_of;
};

struct EmbedPipelineResult {
  int n_embedded = 0;
  std::vector<std::string> skipped;  // fully masked under the ablation
};

// Embeds one split with an optional ablation. Utterances whose attendable
// frames all disappear are skipped with a warning; everything else fails
// hard. Output is one JSON object per line, a header first.
inline EmbedPipelineResult embed_pipeline(PdafModel &model, const RunConfig &rc,
                                          const std::string &split, const std::set<int> &ablate,
                                          const std::string &condition, const std::string &out_path,
                                          std::ostream *log = nullptr) {
  const Manifest manifest = read_manifest(manifest_path(rc));
  if (model.cfg.feature_fingerprint != manifest.feature_fingerprint) {
    throw ValidationError("model was trained on feature fingerprint " +
                          model.cfg.feature_fingerprint + " but the manifest carries " +
                          manifest.feature_fingerprint + "; refusing to mix artifacts");
  }
  const AlignmentMap alignments = load_alignments(rc);
  std::vector<Utterance> utts = load_utterances(rc, manifest, alignments, split);
  std::map<std::string, std::string> split_by_utt;
  for (const ManifestEntry &e : manifest.utts) split_by_utt[e.utt] = e.split;

  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw Error("cannot write embeddings: " + out_path);
  os << nlohmann::json{{"model_fingerprint", model.cfg.fingerprint},
                       {"feature_fingerprint", model.cfg.feature_fingerprint},
                       {"estimator", estimator_name(model.cfg.estimator)},
                       {"lambda", model.cfg.lambda},
                       {"seed", model.cfg.seed},
                       {"d_emb", model.cfg.d_emb},
                       {"condition", condition}}
            .dump()
     << "\n";

  EmbedPipelineResult result;
  for (const Utterance &u : utts) {
    std::vector<double> emb;
    try {
      emb = embed_utterance(model, u, ablate);
    } catch (const ValidationError &e) {
      result.skipped.push_back(u.utt);
      if (log != nullptr) *log << "embed: skipping " << u.utt << ": " << e.what() << "\n";
      continue;
    }
    os << nlohmann::json{{"utt", u.utt},
                         {"speaker", u.speaker},
                         {"split", split_by_utt[u.utt]},
                         {"embedding", emb}}
              .dump()
       << "\n";
    ++result.n_embedded;
  }
  if (result.n_embedded == 0) {
    throw ValidationError("embed: every utterance in split '" + split + "' was skipped");
  }
  return result;
}

inline EmbeddingSet read_embeddings(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open embeddings: " + path);
  EmbeddingSet set;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception &e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (lineno == 1) {
      if (!j.contains("model_fingerprint")) {
        throw ParseError(path + ": first line must be the fingerprint header");
      }
      set.header = j;
      continue;
    }
    try {
      const std::string utt = j.at("utt").get<std::string>();
      set.order.push_back(utt);
      set.vectors[utt] = j.at("embedding").get<std::vector<double>>();
      set.speaker_of[utt] = j.at("speaker").get<std::string>();
      set.split_of[utt] = j.at("split").get<std::string>();
    } catch (const nlohmann::json::exception &e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (set.header.is_null()) throw ParseError(path + ": empty embeddings file");
  return set;
}

// ---------------------------------------------------------------------------
// Scoring and ablation drivers
// ---------------------------------------------------------------------------

struct ScorePipelineResult {
  EerReport report;
  std::vector<ScoredTrial> scores;
};

inline ScorePipelineResult score_trials(const EmbeddingSet &emb, const std::vector<Trial> &trials) {
  std::vector<double> t_scores, n_scores;
  std::vector<ScoredTrial> scored;
  for (const Trial &t : trials) {
    auto a = emb.vectors.find(t.utt_a);
    auto b = emb.vectors.find(t.utt_b);
    if (a == emb.vectors.end() || b == emb.vectors.end()) {
      throw ValidationError("trial references an utterance without an embedding: " +
                            (a == emb.vectors.end() ? t.utt_a : t.utt_b));
    }
    const double s = cosine_score(a->second, b->second);
    (t.target ? t_scores : n_scores).push_back(s);
    scored.push_back({t, s});
  }
  ScorePipelineResult result;
  result.report = compute_eer(t_scores, n_scores);
  result.scores = std::move(scored);
  return result;
}

// Trials over the test split of an embeddings file, balanced per speaker.
inline std::vector<Trial> make_trials_from_embeddings(const EmbeddingSet &emb, int n_per_speaker,
                                                      uint64_t seed) {
  std::map<std::string, std::vector<std::string>> by_speaker;
  for (const std::string &utt : emb.order) by_speaker[emb.speaker_of.at(utt)].push_back(utt);
  return make_trials(by_speaker, n_per_speaker, seed);
}

// Ablation driver: re-embeds the trial utterances per condition straight from
// the cached features. Fully masked utterances become nullopt and are
// excluded by the study with a warning.
inline AblationResult run_ablation(PdafModel &model, const RunConfig &rc,
                                   const std::vector<Trial> &trials,
                                   const std::vector<AblationCondition> &conditions) {
  const Manifest manifest = read_manifest(manifest_path(rc));
  if (model.cfg.feature_fingerprint != manifest.feature_fingerprint) {
    throw ValidationError("model feature fingerprint " + model.cfg.feature_fingerprint +
                          " does not match manifest " + manifest.feature_fingerprint);
  }
  const AlignmentMap alignments = load_alignments(rc);
  std::vector<Utterance> all = load_utterances(rc, manifest, alignments, "all");
  std::map<std::string, const Utterance *> by_name;
  for (const Utterance &u : all) by_name[u.utt] = &u;

  auto embed = [&](const std::string &utt,
                   const std::set<int> &ablate) -> std::optional<std::vector<double>> {
    auto it = by_name.find(utt);
    if (it == by_name.end()) {
      throw ValidationError("trial references unknown utterance " + utt);
    }
    try {
      return embed_utterance(model, *it->second, ablate);
    } catch (const ValidationError &) {
      return std::nullopt;  // nothing attendable under this condition
    }
  };
  return ablation_study(trials, conditions, embed);
}

inline nlohmann::json ablation_report_json(const AblationResult &res, const PdafModel &model,
                                           int64_t n_input_trials) {
  nlohmann::json rows = nlohmann::json::array();
  for (const AblationRow &r : res.rows) {
    rows.push_back({{"condition", r.condition},
                    {"eer", r.eer},
                    {"delta_pp", r.delta_pp},
                    {"n_trials", r.n_trials},
                    {"n_excluded", r.n_excluded}});
  }
  return nlohmann::json{{"model_fingerprint", model.cfg.fingerprint},
                        {"feature_fingerprint", model.cfg.feature_fingerprint},
                        {"estimator", estimator_name(model.cfg.estimator)},
                        {"lambda", model.cfg.lambda},
                        {"seed", model.cfg.seed},
                        {"baseline_eer", res.baseline_eer},
                        {"n_input_trials", n_input_trials},
                        {"rows", rows},
                        {"warnings", res.warnings}};
}

}  // namespace pdaf

#endif  // PDAF_PIPELINE_HPP_

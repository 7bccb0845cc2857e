// pdaf/eval.hpp

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

#ifndef PDAF_EVAL_HPP_
#define PDAF_EVAL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pdaf/common.hpp"

namespace pdaf {

// Verification trial: same-speaker pairs are targets, cross-speaker pairs
// are nontargets. The two utterances are always distinct.
struct Trial {
  std::string utt_a;
  std::string utt_b;
  bool target = false;
};

struct EerReport {
  double eer = 0.0;
  double threshold = 0.0;
  int64_t n_target = 0;
  int64_t n_nontarget = 0;
  std::string condition;
};

// ---------------------------------------------------------------------------
// Trial construction
// ---------------------------------------------------------------------------

// Balanced trial list: up to n_per_speaker same-speaker pairs per speaker and
// an equal overall number of cross-speaker pairs. Fully determined by seed.
inline std::vector<Trial> make_trials(const std::map<std::string, std::vector<std::string>> &by_speaker,
                                      int n_per_speaker, uint64_t seed) {
  if (n_per_speaker < 1) throw ValidationError("make_trials: n_per_speaker must be >= 1");
  if (by_speaker.size() < 2) {
    throw ValidationError("make_trials: need at least 2 speakers, got " +
                          std::to_string(by_speaker.size()));
  }
  for (const auto &[spk, utts] : by_speaker) {
    if (utts.size() < 2) {
      throw ValidationError("make_trials: speaker " + spk + " has " +
                            std::to_string(utts.size()) + " utterance(s), need at least 2");
    }
    std::set<std::string> uniq(utts.begin(), utts.end());
    if (uniq.size() != utts.size()) {
      throw ValidationError("make_trials: speaker " + spk + " lists a duplicate utterance");
    }
  }

  Rng rng(seed);
  std::vector<Trial> trials;
  for (const auto &[spk, utts] : by_speaker) {
    std::vector<std::pair<size_t, size_t>> pairs;
    for (size_t i = 0; i < utts.size(); ++i) {
      for (size_t j = i + 1; j < utts.size(); ++j) pairs.emplace_back(i, j);
    }
    Rng local = rng.fork(fnv1a64(spk));
    local.shuffle(pairs);
    const size_t take = std::min(pairs.size(), static_cast<size_t>(n_per_speaker));
    for (size_t k = 0; k < take; ++k) {
      trials.push_back({utts[pairs[k].first], utts[pairs[k].second], true});
    }
  }
  const size_t n_target = trials.size();

  std::vector<std::string> speakers;
  for (const auto &[spk, utts] : by_speaker) speakers.push_back(spk);
  size_t cross_pairs = 0;
  for (size_t a = 0; a < speakers.size(); ++a) {
    for (size_t b = a + 1; b < speakers.size(); ++b) {
      cross_pairs += by_speaker.at(speakers[a]).size() * by_speaker.at(speakers[b]).size();
    }
  }
  if (cross_pairs < n_target) {
    throw ValidationError("make_trials: only " + std::to_string(cross_pairs) +
                          " cross-speaker pairs exist, need " + std::to_string(n_target));
  }

  Rng cross_rng = rng.fork(fnv1a64("nontarget"));
  std::set<std::pair<std::string, std::string>> used;
  size_t guard = 0;
  while (used.size() < n_target) {
    if (++guard > 1000 * n_target + 1000) {
      throw Error("make_trials: nontarget sampling failed to converge");
    }
    const size_t sa = static_cast<size_t>(cross_rng.uniform_int(static_cast<int64_t>(speakers.size())));
    size_t sb = static_cast<size_t>(cross_rng.uniform_int(static_cast<int64_t>(speakers.size() - 1)));
    if (sb >= sa) ++sb;
    const auto &ua = by_speaker.at(speakers[sa]);
    const auto &ub = by_speaker.at(speakers[sb]);
    std::string a = ua[static_cast<size_t>(cross_rng.uniform_int(static_cast<int64_t>(ua.size())))];
    std::string b = ub[static_cast<size_t>(cross_rng.uniform_int(static_cast<int64_t>(ub.size())))];
    if (b < a) std::swap(a, b);  // unordered pair
    if (!used.insert({a, b}).second) continue;
    trials.push_back({a, b, false});
  }
  return trials;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

inline double cosine_score(const std::vector<double> &a, const std::vector<double> &b) {
  if (a.size() != b.size() || a.empty()) {
    throw DimensionError("cosine_score: vectors of size " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine_score: zero vector has no direction");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Equal error rate by sweeping every distinct score. FAR(t) counts
// nontargets at or above t, FRR(t) counts targets below t. Between adjacent
// candidates the rates are linearly interpolated; the crossing point of
// FAR - FRR defines both the EER and the operating threshold.
inline EerReport compute_eer(const std::vector<double> &target_scores,
                             const std::vector<double> &nontarget_scores,
                             const std::string &condition = "") {
  if (target_scores.empty() || nontarget_scores.empty()) {
    throw ValidationError("compute_eer: both score lists must be non-empty");
  }
  for (double s : target_scores) {
    if (!std::isfinite(s)) throw DomainError("compute_eer: non-finite target score");
  }
  for (double s : nontarget_scores) {
    if (!std::isfinite(s)) throw DomainError("compute_eer: non-finite nontarget score");
  }

  std::vector<double> cand(target_scores.begin(), target_scores.end());
  cand.insert(cand.end(), nontarget_scores.begin(), nontarget_scores.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  cand.insert(cand.begin(), cand.front() - 1.0);  // FAR 1, FRR 0
  cand.push_back(cand.back() + 1.0);              // FAR 0, FRR 1

  std::vector<double> t_sorted(target_scores.begin(), target_scores.end());
  std::vector<double> n_sorted(nontarget_scores.begin(), nontarget_scores.end());
  std::sort(t_sorted.begin(), t_sorted.end());
  std::sort(n_sorted.begin(), n_sorted.end());
  const double nt = static_cast<double>(t_sorted.size());
  const double nn = static_cast<double>(n_sorted.size());

  const size_t m = cand.size();
  std::vector<double> far(m), frr(m);
  for (size_t i = 0; i < m; ++i) {
    const auto ge = n_sorted.end() - std::lower_bound(n_sorted.begin(), n_sorted.end(), cand[i]);
    const auto lt = std::lower_bound(t_sorted.begin(), t_sorted.end(), cand[i]) - t_sorted.begin();
    far[i] = static_cast<double>(ge) / nn;
    frr[i] = static_cast<double>(lt) / nt;
  }

  EerReport rep;
  rep.n_target = static_cast<int64_t>(t_sorted.size());
  rep.n_nontarget = static_cast<int64_t>(n_sorted.size());
  rep.condition = condition;

  // FAR - FRR falls strictly at every interior candidate, so it is zero at
  // most once; otherwise it changes sign between two adjacent candidates.
  for (size_t i = 0; i < m; ++i) {
    const double d = far[i] - frr[i];
    if (d == 0.0) {
      rep.eer = far[i];
      rep.threshold = cand[i];
      return rep;
    }
    if (d < 0.0) {
      const double d_prev = far[i - 1] - frr[i - 1];
      const double t = d_prev / (d_prev - d);
      rep.eer = far[i - 1] + t * (far[i] - far[i - 1]);
      rep.threshold = cand[i - 1] + t * (cand[i] - cand[i - 1]);
      return rep;
    }
  }
  throw Error("compute_eer: no crossing found");  // unreachable, D ends at -1
}

// ---------------------------------------------------------------------------
// Trial and score files
// ---------------------------------------------------------------------------

inline void write_trials(const std::string &path, const std::vector<Trial> &trials) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open trial file for writing: " + path);
  for (const Trial &t : trials) {
    os << t.utt_a << ' ' << t.utt_b << ' ' << (t.target ? "target" : "nontarget") << '\n';
  }
  if (!os) throw Error("trial file write failed: " + path);
}

inline std::vector<Trial> read_trials(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open trial file: " + path);
  std::vector<Trial> trials;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Trial t;
    std::string label, extra;
    if (!(ls >> t.utt_a >> t.utt_b >> label) || (ls >> extra)) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected 'utt_a utt_b target|nontarget'");
    }
    if (label == "target") {
      t.target = true;
    } else if (label == "nontarget") {
      t.target = false;
    } else {
      throw ParseError(path + ":" + std::to_string(lineno) + ": unknown label '" + label + "'");
    }
    if (t.utt_a == t.utt_b) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": trial pairs an utterance (" +
                       t.utt_a + ") with itself");
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

struct ScoredTrial {
  Trial trial;
  double score = 0.0;
};

inline void write_score_csv(const std::string &path, const std::vector<ScoredTrial> &rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open score file for writing: " + path);
  os << "utt_a,utt_b,label,score\n";
  os.precision(17);
  for (const ScoredTrial &r : rows) {
    os << r.trial.utt_a << ',' << r.trial.utt_b << ','
       << (r.trial.target ? "target" : "nontarget") << ',' << r.score << '\n';
  }
  if (!os) throw Error("score file write failed: " + path);
}

// ---------------------------------------------------------------------------
// Ablation study
// ---------------------------------------------------------------------------

struct AblationCondition {
  std::string name;
  std::set<int> ablate;  // phoneme indices masked out of the attendable keys
};

struct AblationRow {
  std::string condition;
  double eer = 0.0;
  double delta_pp = 0.0;  // absolute percentage points against the unmasked run
  int64_t n_trials = 0;
  int64_t n_excluded = 0;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // rows[0] is always the unmasked control
  std::vector<std::string> warnings;
  double baseline_eer = 0.0;
  std::map<std::string, std::vector<ScoredTrial>> scores;  // per condition
};

// Re-embeds the trial utterances once per condition and scores the fixed
// trial list. embed(utt, ablate) returns the embedding, or nullopt when the
// condition masks every frame of that utterance; its trials are then dropped
// with a warning. The control condition runs first with nothing masked.
template <typename EmbedFn>
AblationResult ablation_study(const std::vector<Trial> &trials,
                              const std::vector<AblationCondition> &conditions, EmbedFn &&embed) {
  if (trials.empty()) throw ValidationError("ablation_study: empty trial list");
  std::vector<std::string> utts;
  {
    std::set<std::string> seen;
    for (const Trial &t : trials) {
      if (seen.insert(t.utt_a).second) utts.push_back(t.utt_a);
      if (seen.insert(t.utt_b).second) utts.push_back(t.utt_b);
    }
  }

  AblationResult result;
  std::vector<AblationCondition> all;
  all.push_back({"none", {}});
  for (const AblationCondition &c : conditions) {
    if (c.name == "none" && c.ablate.empty()) continue;  // control is implicit
    all.push_back(c);
  }

  for (const AblationCondition &cond : all) {
    std::map<std::string, std::vector<double>> emb;
    std::set<std::string> dropped;
    for (const std::string &u : utts) {
      std::optional<std::vector<double>> e = embed(u, cond.ablate);
      if (e.has_value()) {
        emb.emplace(u, std::move(*e));
      } else {
        dropped.insert(u);
      }
    }

    AblationRow row;
    row.condition = cond.name;
    std::vector<double> t_scores, n_scores;
    std::vector<ScoredTrial> scored;
    for (const Trial &t : trials) {
      if (dropped.count(t.utt_a) != 0 || dropped.count(t.utt_b) != 0) {
        ++row.n_excluded;
        continue;
      }
      const double s = cosine_score(emb.at(t.utt_a), emb.at(t.utt_b));
      (t.target ? t_scores : n_scores).push_back(s);
      scored.push_back({t, s});
    }
    for (const std::string &u : dropped) {
      result.warnings.push_back("condition " + cond.name + ": utterance " + u +
                                " has no attendable frames left, its trials were excluded");
    }
    if (t_scores.empty() || n_scores.empty()) {
      throw ValidationError("ablation_study: condition " + cond.name +
                            " left no scorable " + (t_scores.empty() ? "target" : "nontarget") +
                            " trials");
    }
    const EerReport rep = compute_eer(t_scores, n_scores, cond.name);
    row.eer = rep.eer;
    row.n_trials = static_cast<int64_t>(t_scores.size() + n_scores.size());
    if (cond.name == "none") {
      result.baseline_eer = rep.eer;
    }
    row.delta_pp = (rep.eer - result.baseline_eer) * 100.0;
    result.rows.push_back(row);
    result.scores.emplace(cond.name, std::move(scored));
  }
  return result;
}

inline void write_ablation_csv(const std::string &path, const std::vector<AblationRow> &rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open ablation report for writing: " + path);
  os << "condition,eer,delta_pp,n_trials\n";
  os.precision(17);
  for (const AblationRow &r : rows) {
    os << r.condition << ',' << r.eer << ',' << r.delta_pp << ',' << r.n_trials << '\n';
  }
  if (!os) throw Error("ablation report write failed: " + path);
}

}  // namespace pdaf

#endif  // PDAF_EVAL_HPP_

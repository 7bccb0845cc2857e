// pdaf/priors.hpp
//
// Phoneme prior estimation. Four counting estimators over either the whole
// corpus or a single utterance, using either segment occurrences or frame
// counts, plus the bias-vector construction that feeds attention. Silence is
// excluded from every denominator; SIL keys are hard-masked downstream, so
// its table entry exists only to keep log() defined.
//
//   POP  occurrences over the dataset      PUP  occurrences in one utterance
//   PFP  frames over the dataset           FUP  frames in one utterance
//
// A probability floor keeps -log P finite for phonemes absent from an
// utterance; the floored table is renormalized so unclamped entries still
// carry the remaining mass.

// Copyright 2026  PDAF Authors

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

#pragma once

#include <json.hpp>

#include "pdaf/phonetics.hpp"
#include "pdaf/tensor.hpp"

namespace pdaf {

inline constexpr double kPriorFloor = 1e-6;

/// Run-level estimator choice. Baseline means no debiasing at all (lambda
/// pinned to zero); the others name which table is built. POP and PFP use the
/// dataset-level table during training and fall back to their per-utterance
/// counterpart (PUP, FUP) at inference, when the training corpus is not
/// assumed to be on hand.
enum class EstimatorKind { kBaseline, kPop, kPup, kPfp, kFup, kLearned };

inline std::string estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kBaseline: return "baseline";
    case EstimatorKind::kPop: return "pop";
    case EstimatorKind::kPup: return "pup";
    case EstimatorKind::kPfp: return "pfp";
    case EstimatorKind::kFup: return "fup";
    case EstimatorKind::kLearned: return "learned";
  }
  throw Error("unreachable estimator kind");
}

inline EstimatorKind parse_estimator(const std::string &s) {
  for (EstimatorKind k : {EstimatorKind::kBaseline, EstimatorKind::kPop, EstimatorKind::kPup,
                          EstimatorKind::kPfp, EstimatorKind::kFup, EstimatorKind::kLearned}) {
    if (s == estimator_name(k)) return k;
  }
  throw ValidationError("unknown estimator '" + s + "' (expected baseline|pop|pup|pfp|fup|learned)");
}

/// The table actually consulted in a given phase under the pairing above.
/// Baseline and learned have no counting table in either phase.
inline EstimatorKind effective_estimator(EstimatorKind run, Phase phase) {
  if (phase == Phase::kInfer) {
    if (run == EstimatorKind::kPop) return EstimatorKind::kPup;
    if (run == EstimatorKind::kPfp) return EstimatorKind::kFup;
  }
  return run;
}

struct CorpusCounts {
  std::vector<int64_t> occ;     // segment occurrences per inventory index
  std::vector<int64_t> frames;  // frame counts per inventory index

  CorpusCounts()
      : occ(static_cast<size_t>(PhonemeInventory::kSize), 0),
        frames(static_cast<size_t>(PhonemeInventory::kSize), 0) {}

  void add_segments(const std::vector<AlignmentSegment> &segs) {
    for (const auto &s : segs) ++occ[static_cast<size_t>(s.phoneme)];
  }
  void add_labels(const std::vector<int> &labels) {
    for (int l : labels) ++frames[static_cast<size_t>(l)];
  }
  void merge(const CorpusCounts &other) {
    for (size_t i = 0; i < occ.size(); ++i) {
      occ[i] += other.occ[i];
      frames[i] += other.frames[i];
    }
  }
};

struct PriorTable {
  EstimatorKind estimator = EstimatorKind::kPop;
  double floor = kPriorFloor;
  std::vector<double> probs;      // floored and renormalized, length 41
  std::vector<double> raw_probs;  // pre-floor ratios, zeros allowed; not serialized
};

namespace detail {

/// Floor-and-renormalize over the non-silence entries: clamp entries below
/// the floor, spread the remaining mass proportionally over the rest, and
/// iterate because rescaling can push further entries under the floor.
inline std::vector<double> floor_probs(const std::vector<double> &raw, double floor) {
  const size_t n = raw.size();
  std::vector<bool> clamped(n, false);
  clamped[PhonemeInventory::kSilIndex] = true;  // handled separately
  std::vector<double> out(n, 0.0);
  for (int iter = 0; iter < PhonemeInventory::kSize + 1; ++iter) {
    size_t n_clamped = 0;
    double raw_free = 0.0;
    for (size_t i = 1; i < n; ++i) {
      if (clamped[i]) {
        ++n_clamped;
      } else {
        raw_free += raw[i];
      }
    }
    const double free_mass = 1.0 - floor * static_cast<double>(n_clamped);
    if (free_mass <= 0.0 || raw_free <= 0.0) {
      throw NumericError("prior flooring cannot distribute probability mass");
    }
    const double scl = free_mass / raw_free;
    bool changed = false;
    for (size_t i = 1; i < n; ++i) {
      if (!clamped[i] && raw[i] * scl < floor) {
        clamped[i] = true;
        changed = true;
      }
    }
    if (!changed) {
      for (size_t i = 1; i < n; ++i) out[i] = clamped[i] ? floor : raw[i] * scl;
      out[PhonemeInventory::kSilIndex] = floor;
      return out;
    }
  }
  throw Error("prior flooring failed to converge");
}

inline PriorTable table_from_counts(const std::vector<int64_t> &counts, EstimatorKind tag,
                                    const std::string &what) {
  int64_t total = 0;
  for (size_t i = 1; i < counts.size(); ++i) {
    if (counts[i] < 0) throw ValidationError("negative phoneme count");
    total += counts[i];
  }
  if (total == 0) throw ValidationError(what + ": no non-silence phoneme content to count");
  PriorTable t;
  t.estimator = tag;
  t.floor = kPriorFloor;
  t.raw_probs.assign(counts.size(), 0.0);
  for (size_t i = 1; i < counts.size(); ++i) {
    t.raw_probs[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  }
  t.probs = floor_probs(t.raw_probs, t.floor);
  return t;
}

}  // namespace detail

/// Eq.-style dataset occurrence prior: how often each phoneme occurs as a
/// segment across the whole corpus.
inline PriorTable pop(const CorpusCounts &counts) {
  return detail::table_from_counts(counts.occ, EstimatorKind::kPop, "pop");
}

/// Occurrence prior of a single utterance.
inline PriorTable pup(const std::vector<AlignmentSegment> &segments) {
  CorpusCounts c;
  c.add_segments(segments);
  PriorTable t = detail::table_from_counts(c.occ, EstimatorKind::kPup, "pup");
  return t;
}

/// Dataset frame prior: fraction of frames carrying each phoneme.
inline PriorTable pfp(const CorpusCounts &counts) {
  return detail::table_from_counts(counts.frames, EstimatorKind::kPfp, "pfp");
}

/// Frame prior of a single utterance, from its frame labels.
inline PriorTable fup(const std::vector<int> &labels) {
  CorpusCounts c;
  c.add_labels(labels);
  PriorTable t = detail::table_from_counts(c.frames, EstimatorKind::kFup, "fup");
  return t;
}

/// Additive attention bias per frame: -lambda * log P(label[t]). SIL frames
/// get a value too, but the key mask makes it unreachable.
inline std::vector<double> frame_bias(const PriorTable &table, const std::vector<int> &labels,
                                      double lambda) {
  if (lambda < 0.0 || !std::isfinite(lambda)) {
    throw ValidationError("frame_bias: lambda must be finite and >= 0");
  }
  if (table.probs.size() != static_cast<size_t>(PhonemeInventory::kSize)) {
    throw DimensionError("frame_bias: malformed prior table");
  }
  std::vector<double> bias(labels.size());
  for (size_t t = 0; t < labels.size(); ++t) {
    const int l = labels[t];
    if (l < 0 || l >= PhonemeInventory::kSize) {
      throw ValidationError("frame_bias: label out of range");
    }
    const double p = table.probs[static_cast<size_t>(l)];
    if (p <= 0.0) throw NumericError("frame_bias: non-positive probability survived flooring");
    bias[t] = -lambda * std::log(p);
  }
  return bias;
}

inline nlohmann::json prior_table_to_json(const PriorTable &t) {
  nlohmann::json j;
  j["estimator"] = estimator_name(t.estimator);
  j["floor"] = t.floor;
  j["probs"] = t.probs;
  return j;
}

inline PriorTable prior_table_from_json(const nlohmann::json &j) {
  if (!j.is_object() || !j.contains("estimator") || !j.contains("floor") || !j.contains("probs")) {
    throw ParseError("prior table: expected {estimator, floor, probs}");
  }
  PriorTable t;
  t.estimator = parse_estimator(j.at("estimator").get<std::string>());
  t.floor = j.at("floor").get<double>();
  if (t.floor <= 0.0) throw ValidationError("prior table: floor must be positive");
  t.probs = j.at("probs").get<std::vector<double>>();
  if (t.probs.size() != static_cast<size_t>(PhonemeInventory::kSize)) {
    throw ValidationError("prior table: probs must have " +
                          std::to_string(PhonemeInventory::kSize) + " entries");
  }
  for (double p : t.probs) {
    if (!(p > 0.0) || p > 1.0) throw ValidationError("prior table: probabilities must be in (0,1]");
  }
  t.raw_probs = t.probs;  // pre-floor ratios are not round-tripped
  return t;
}

}  // namespace pdaf

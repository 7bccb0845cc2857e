// pdaf/phonetics.hpp
//
// Phoneme inventory, alignment ingestion, frame labeling and key masks.
// The inventory is 40 ARPABET phonemes plus SIL at index 0, with each
// non-silence phoneme assigned to exactly one phonetic class. Index order is
// part of every serialized artifact and must never change.

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

#include <map>
#include <set>

#include <json.hpp>

#include "pdaf/common.hpp"

namespace pdaf {

enum class PhoneticClass {
  kVowel,
  kFricative,
  kStop,
  kNasal,
  kSibilant,
  kAffricate,
  kApproximant,
  kLateral,
};

inline const std::vector<std::pair<std::string, PhoneticClass>> &phonetic_class_names() {
  static const std::vector<std::pair<std::string, PhoneticClass>> names = {
      {"Vowels", PhoneticClass::kVowel},        {"Fricative", PhoneticClass::kFricative},
      {"Stop", PhoneticClass::kStop},           {"Nasal", PhoneticClass::kNasal},
      {"Sibilant", PhoneticClass::kSibilant},   {"Affricate", PhoneticClass::kAffricate},
      {"Approximant", PhoneticClass::kApproximant}, {"Lateral", PhoneticClass::kLateral},
  };
  return names;
}

inline std::string phonetic_class_name(PhoneticClass c) {
  for (const auto &[name, cls] : phonetic_class_names()) {
    if (cls == c) return name;
  }
  throw Error("unknown phonetic class");
}

class PhonemeInventory {
 public:
  static constexpr int kSilIndex = 0;
  static constexpr int kNumPhonemes = 40;  // excluding SIL
  static constexpr int kSize = kNumPhonemes + 1;

  static const PhonemeInventory &get() {
    static const PhonemeInventory inv;
    return inv;
  }

  int size() const { return kSize; }

  const std::string &symbol(int index) const {
    if (index < 0 || index >= kSize) {
      throw ValidationError("inventory index out of range: " + std::to_string(index));
    }
    return symbols_[static_cast<size_t>(index)];
  }

  bool contains(const std::string &symbol) const { return index_.count(symbol) > 0; }

  int index_of(const std::string &symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) throw ValidationError("unknown phoneme symbol '" + symbol + "'");
    return it->second;
  }

  PhoneticClass phoneme_class(int index) const {
    if (index == kSilIndex) throw ValidationError("SIL has no phonetic class");
    symbol(index);  // range check
    return class_map_[static_cast<size_t>(index)];
  }

  std::vector<int> class_members(PhoneticClass c) const {
    std::vector<int> out;
    for (int i = 1; i < kSize; ++i) {
      if (class_map_[static_cast<size_t>(i)] == c) out.push_back(i);
    }
    return out;
  }

  const std::vector<std::string> &symbols() const { return symbols_; }

 private:
  PhonemeInventory() {
    symbols_ = {"SIL", "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH",
                "DX",  "EH", "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH", "K",
                "L",   "M",  "N",  "NG", "OW", "OY", "P",  "R",  "S",  "SH", "T",
                "TH",  "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};
    for (size_t i = 0; i < symbols_.size(); ++i) index_[symbols_[i]] = static_cast<int>(i);
    class_map_.resize(symbols_.size(), PhoneticClass::kVowel);
    auto assign = [this](std::initializer_list<const char *> syms, PhoneticClass c) {
      for (const char *s : syms) class_map_[static_cast<size_t>(index_.at(s))] = c;
    };
    assign({"AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH",
            "UW"},
           PhoneticClass::kVowel);
    assign({"F", "V", "TH", "DH", "HH"}, PhoneticClass::kFricative);
    assign({"P", "B", "T", "D", "K", "G", "DX"}, PhoneticClass::kStop);
    assign({"M", "N", "NG"}, PhoneticClass::kNasal);
    assign({"S", "Z", "SH", "ZH"}, PhoneticClass::kSibilant);
    assign({"CH", "JH"}, PhoneticClass::kAffricate);
    assign({"W", "R", "Y"}, PhoneticClass::kApproximant);
    assign({"L"}, PhoneticClass::kLateral);
  }

  std::vector<std::string> symbols_;
  std::map<std::string, int> index_;
  std::vector<PhoneticClass> class_map_;
};

struct AlignmentSegment {
  int phoneme = PhonemeInventory::kSilIndex;
  double start_s = 0.0;
  double end_s = 0.0;
};

using AlignmentMap = std::map<std::string, std::vector<AlignmentSegment>>;

/// JSON-lines alignments: one object per utterance,
/// {"utt": id, "segments": [[symbol, start_s, end_s], ...]}.
/// Segments are sorted by start time and must not overlap.
inline AlignmentMap parse_alignments(std::istream &is, const std::string &source = "alignments") {
  const auto &inv = PhonemeInventory::get();
  AlignmentMap out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error &e) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("utt") || !j.contains("segments") ||
        !j["utt"].is_string() || !j["segments"].is_array()) {
      throw ParseError(source + ":" + std::to_string(lineno) +
                       ": expected {\"utt\": ..., \"segments\": [...]}");
    }
    const std::string utt = j["utt"].get<std::string>();
    if (out.count(utt)) {
      throw ValidationError(source + ":" + std::to_string(lineno) + ": duplicate utterance '" +
                            utt + "'");
    }
    std::vector<AlignmentSegment> segs;
    for (const auto &e : j["segments"]) {
      if (!e.is_array() || e.size() != 3 || !e[0].is_string() || !e[1].is_number() ||
          !e[2].is_number()) {
        throw ParseError(source + ":" + std::to_string(lineno) +
                         ": segment must be [symbol, start_s, end_s]");
      }
      const std::string sym = e[0].get<std::string>();
      if (!inv.contains(sym)) {
        throw ValidationError(source + ":" + std::to_string(lineno) +
                              ": unknown phoneme symbol '" + sym + "'");
      }
      AlignmentSegment s;
      s.phoneme = inv.index_of(sym);
      s.start_s = e[1].get<double>();
      s.end_s = e[2].get<double>();
      if (s.start_s < 0.0 || s.end_s <= s.start_s) {
        throw ValidationError("utterance '" + utt + "': segment [" + std::to_string(s.start_s) +
                              ", " + std::to_string(s.end_s) + ") has non-positive duration");
      }
      segs.push_back(s);
    }
    std::sort(segs.begin(), segs.end(),
              [](const AlignmentSegment &a, const AlignmentSegment &b) {
                return a.start_s < b.start_s;
              });
    for (size_t i = 1; i < segs.size(); ++i) {
      if (segs[i].start_s < segs[i - 1].end_s) {
        throw ValidationError("utterance '" + utt + "': segments overlap near " +
                              std::to_string(segs[i].start_s) + "s");
      }
    }
    out.emplace(utt, std::move(segs));
  }
  return out;
}

inline AlignmentMap parse_alignments_file(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw Error("parse_alignments: cannot open " + path);
  return parse_alignments(is, path);
}

/// Frame t is labeled with the segment containing its window center
/// t*hop + win/2 (start inclusive, end exclusive). Uncovered centers are SIL.
inline std::vector<int> label_frames(const std::vector<AlignmentSegment> &segments, int64_t num_frames,
                                     double hop_ms, double win_ms) {
  if (num_frames < 0) throw ValidationError("label_frames: negative frame count");
  std::vector<int> labels(static_cast<size_t>(num_frames), PhonemeInventory::kSilIndex);
  for (int64_t t = 0; t < num_frames; ++t) {
    const double center_s = (static_cast<double>(t) * hop_ms + win_ms / 2.0) / 1000.0;
    for (const AlignmentSegment &s : segments) {
      if (center_s >= s.start_s && center_s < s.end_s) {
        labels[static_cast<size_t>(t)] = s.phoneme;
        break;
      }
    }
  }
  return labels;
}

/// Keys open to attention: silence is always closed, as is anything in the
/// ablation set. An utterance with no attendable frame cannot be scored.
inline std::vector<bool> build_key_mask(const std::vector<int> &labels,
                                        const std::set<int> &ablate = {}) {
  const auto &inv = PhonemeInventory::get();
  std::vector<bool> attendable(labels.size(), false);
  bool any = false;
  for (size_t t = 0; t < labels.size(); ++t) {
    inv.symbol(labels[t]);  // range check
    const bool open = labels[t] != PhonemeInventory::kSilIndex && ablate.count(labels[t]) == 0;
    attendable[t] = open;
    any = any || open;
  }
  if (!any) throw ValidationError("build_key_mask: no attendable frames left");
  return attendable;
}

/// Ablation spec: a phonetic class name ("Vowels", "Stop", ...) or a
/// comma-separated list of phoneme symbols ("AA" or "S,Z,SH").
inline std::set<int> resolve_ablation_spec(const std::string &spec) {
  if (spec.empty()) return {};
  const auto &inv = PhonemeInventory::get();
  for (const auto &[name, cls] : phonetic_class_names()) {
    if (spec == name) {
      const auto members = inv.class_members(cls);
      return std::set<int>(members.begin(), members.end());
    }
  }
  std::set<int> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto a = tok.find_first_not_of(" \t");
    if (a == std::string::npos) throw ValidationError("ablation spec has an empty entry");
    const auto b = tok.find_last_not_of(" \t");
    out.insert(inv.index_of(tok.substr(a, b - a + 1)));
  }
  if (out.empty()) throw ValidationError("empty ablation spec");
  return out;
}

}  // namespace pdaf

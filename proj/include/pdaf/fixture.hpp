// pdaf/fixture.hpp

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

#ifndef PDAF_FIXTURE_HPP_
#define PDAF_FIXTURE_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdaf/common.hpp"
#include "pdaf/phonetics.hpp"
#include "pdaf/wav.hpp"

namespace pdaf {

// Synthetic desk-scale corpus. Every speaker gets a distinct vocal profile
// (pitch, spectral tilt, three resonance bumps) and every utterance is a
// phoneme sequence rendered from it, with exact alignments as a byproduct.
// Speaker identity lives mostly in the vowels: voiced harmonic segments use
// the full resonance envelope, consonants only a faint trace of it. ZH is
// never emitted, which leaves one inventory entry provably absent for
// masking experiments on phonemes the data does not contain.
struct FixtureConfig {
  std::string out_dir;
  int n_speakers = 8;
  int utts_per_speaker = 20;
  uint64_t seed = 7;
  int sample_rate = 16000;

  void validate() const {
    if (out_dir.empty()) throw ValidationError("FixtureConfig: out_dir must be set");
    if (n_speakers < 0 || utts_per_speaker < 0) {
      throw ValidationError("FixtureConfig: negative corpus size");
    }
    if (sample_rate < 8000) throw ValidationError("FixtureConfig: sample_rate below 8 kHz");
  }
};

struct FixtureUtt {
  std::string utt;
  std::string speaker;
  std::string split;  // "train" or "test"
};

struct FixtureSummary {
  std::vector<FixtureUtt> utts;
  std::string corpus_json;
  std::string alignments_path;
};

namespace fixture_detail {

struct Voice {
  double f0 = 110.0;
  double tilt = 0.92;  // per-kHz high frequency decay
  std::array<double, 3> res_f{};
  std::array<double, 3> res_g{};
  std::array<double, 3> res_w{};
};

inline Voice make_voice(int speaker_index, uint64_t seed) {
  Rng rng(seed);
  Rng r = rng.fork(fnv1a64("voice:" + std::to_string(speaker_index)));
  Voice v;
  v.f0 = 95.0 * std::pow(1.09, speaker_index) * r.uniform(0.97, 1.03);
  v.tilt = r.uniform(0.82, 0.97);
  v.res_f = {r.uniform(400.0, 900.0), r.uniform(1200.0, 2600.0), r.uniform(2800.0, 5200.0)};
  v.res_g = {r.uniform(2.0, 5.0), r.uniform(2.0, 5.0), r.uniform(1.5, 4.0)};
  v.res_w = {r.uniform(150.0, 300.0), r.uniform(180.0, 350.0), r.uniform(220.0, 420.0)};
  return v;
}

inline double gauss_bump(double f, double center, double width) {
  const double z = (f - center) / width;
  return std::exp(-0.5 * z * z);
}

// Full envelope for vowels; non-vowels raise it to a small power so most of
// the speaker information rides on the vowels.
inline double voice_envelope(const Voice &v, double f) {
  double e = std::pow(v.tilt, f / 1000.0);
  for (int k = 0; k < 3; ++k) e *= 1.0 + v.res_g[static_cast<size_t>(k)] *
                                        gauss_bump(f, v.res_f[static_cast<size_t>(k)],
                                                   v.res_w[static_cast<size_t>(k)]);
  return e;
}

// First two formants per vowel, in inventory vowel order:
// AA AE AH AO AW AY EH ER EY IH IY OW OY UH UW.
inline const std::map<std::string, std::pair<double, double>> &vowel_formants() {
  static const std::map<std::string, std::pair<double, double>> table = {
      {"AA", {730.0, 1090.0}}, {"AE", {660.0, 1720.0}}, {"AH", {640.0, 1190.0}},
      {"AO", {570.0, 840.0}},  {"AW", {700.0, 1030.0}}, {"AY", {660.0, 1200.0}},
      {"EH", {530.0, 1840.0}}, {"ER", {490.0, 1350.0}}, {"EY", {480.0, 2000.0}},
      {"IH", {390.0, 1990.0}}, {"IY", {270.0, 2290.0}}, {"OW", {490.0, 910.0}},
      {"OY", {500.0, 1000.0}}, {"UH", {440.0, 1020.0}}, {"UW", {300.0, 870.0}}};
  return table;
}

// Characteristic noise band center for consonants rendered from noise.
inline double noise_center(const std::string &sym) {
  static const std::map<std::string, double> table = {
      {"F", 4500.0}, {"V", 3500.0},  {"TH", 5000.0}, {"DH", 4000.0}, {"HH", 1900.0},
      {"S", 6300.0}, {"Z", 5900.0},  {"SH", 3800.0}, {"ZH", 3300.0}, {"CH", 4200.0},
      {"JH", 3600.0}, {"P", 900.0},  {"B", 800.0},   {"T", 4200.0},  {"D", 3800.0},
      {"K", 2200.0}, {"G", 2000.0},  {"DX", 3000.0}};
  auto it = table.find(sym);
  if (it == table.end()) throw Error("fixture: no noise band for " + sym);
  return it->second;
}

inline bool is_voiced_consonant(const std::string &sym) {
  static const std::set<std::string> voiced = {"V", "DH", "Z", "JH", "B", "D", "G", "DX"};
  return voiced.count(sym) != 0;
}

inline void apply_edge_ramp(std::vector<double> &buf, int ramp) {
  const int n = static_cast<int>(buf.size());
  ramp = std::min(ramp, n / 2);
  for (int i = 0; i < ramp; ++i) {
    const double w = static_cast<double>(i + 1) / static_cast<double>(ramp + 1);
    buf[static_cast<size_t>(i)] *= w;
    buf[static_cast<size_t>(n - 1 - i)] *= w;
  }
}

inline void scale_rms(std::vector<double> &buf, double target) {
  double acc = 0.0;
  for (double s : buf) acc += s * s;
  const double rms = std::sqrt(acc / static_cast<double>(buf.size()));
  if (rms > 0.0) {
    const double g = target / rms;
    for (double &s : buf) s *= g;
  }
}

// Harmonic stack shaped by a two-formant filter and the speaker envelope.
// envelope_power < 1 weakens the speaker cue for vowel-like consonants.
inline std::vector<double> render_harmonic(Rng &rng, const Voice &v, double f1, double f2, int n,
                                           int sr, double envelope_power, double level) {
  std::vector<double> buf(static_cast<size_t>(n), 0.0);
  const double nyquist = static_cast<double>(sr) / 2.0;
  for (int k = 1;; ++k) {
    const double f = static_cast<double>(k) * v.f0;
    if (f >= std::min(6500.0, nyquist - 200.0)) break;
    const double shape = gauss_bump(f, f1, 90.0 + 0.05 * f1) +
                         0.7 * gauss_bump(f, f2, 120.0 + 0.05 * f2) + 0.08;
    const double amp =
        shape * std::pow(voice_envelope(v, f), envelope_power) / std::pow(static_cast<double>(k), 0.3);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double w = 2.0 * M_PI * f / static_cast<double>(sr);
    for (int i = 0; i < n; ++i) {
      buf[static_cast<size_t>(i)] += amp * std::sin(w * static_cast<double>(i) + phase);
    }
  }
  scale_rms(buf, level);
  apply_edge_ramp(buf, sr / 200);  // 5 ms
  return buf;
}

// White noise through a two-pole resonator at the band center, with a faint
// speaker tilt so consonants are not perfectly speaker-neutral.
inline std::vector<double> render_noise(Rng &rng, const Voice &v, double center, int n, int sr,
                                        double level, double hum_level) {
  std::vector<double> buf(static_cast<size_t>(n), 0.0);
  const double theta = 2.0 * M_PI * center / static_cast<double>(sr);
  const double r = 0.94;
  double y1 = 0.0, y2 = 0.0;
  const double tilt_gain = std::pow(voice_envelope(v, center), 0.25);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    const double y = x + 2.0 * r * std::cos(theta) * y1 - r * r * y2;
    y2 = y1;
    y1 = y;
    buf[static_cast<size_t>(i)] = y * tilt_gain;
  }
  scale_rms(buf, level);
  if (hum_level > 0.0) {
    const double w = 2.0 * M_PI * v.f0 / static_cast<double>(sr);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (int i = 0; i < n; ++i) {
      buf[static_cast<size_t>(i)] += hum_level * std::sin(w * static_cast<double>(i) + phase);
    }
  }
  apply_edge_ramp(buf, sr / 250);  // 4 ms
  return buf;
}

inline std::vector<double> render_segment(Rng &rng, const Voice &v, const std::string &sym, int n,
                                          int sr) {
  const auto &inv = PhonemeInventory::get();
  const PhoneticClass cls = inv.phoneme_class(inv.index_of(sym));
  switch (cls) {
    case PhoneticClass::kVowel: {
      const auto [f1, f2] = vowel_formants().at(sym);
      return render_harmonic(rng, v, f1, f2, n, sr, 1.0, 0.22);
    }
    case PhoneticClass::kNasal: {
      // Murmur: low first formant, heavy rolloff, weak speaker cue.
      const double f1 = sym == "M" ? 250.0 : sym == "N" ? 320.0 : 380.0;
      return render_harmonic(rng, v, f1, 1100.0, n, sr, 0.3, 0.14);
    }
    case PhoneticClass::kApproximant:
    case PhoneticClass::kLateral: {
      static const std::map<std::string, std::pair<double, double>> glides = {
          {"W", {400.0, 800.0}}, {"R", {490.0, 1350.0}}, {"Y", {300.0, 2200.0}},
          {"L", {400.0, 1100.0}}};
      const auto [f1, f2] = glides.at(sym);
      return render_harmonic(rng, v, f1, f2, n, sr, 0.3, 0.16);
    }
    case PhoneticClass::kFricative:
    case PhoneticClass::kSibilant: {
      const double hum = is_voiced_consonant(sym) ? 0.05 : 0.0;
      return render_noise(rng, v, noise_center(sym), n, sr, 0.12, hum);
    }
    case PhoneticClass::kAffricate: {
      // Short stop gap then frication.
      std::vector<double> buf(static_cast<size_t>(n), 0.0);
      const int gap = n / 3;
      const double hum = is_voiced_consonant(sym) ? 0.05 : 0.0;
      std::vector<double> fric = render_noise(rng, v, noise_center(sym), n - gap, sr, 0.13, hum);
      std::copy(fric.begin(), fric.end(), buf.begin() + gap);
      return buf;
    }
    case PhoneticClass::kStop: {
      // Closure silence followed by a burst.
      std::vector<double> buf(static_cast<size_t>(n), 0.0);
      const int closure = (n * 55) / 100;
      const double hum = is_voiced_consonant(sym) ? 0.04 : 0.0;
      std::vector<double> burst = render_noise(rng, v, noise_center(sym), n - closure, sr, 0.16, hum);
      std::copy(burst.begin(), burst.end(), buf.begin() + closure);
      return buf;
    }
  }
  throw Error("fixture: unhandled class for " + sym);
}

// All symbols the generator may emit. ZH stays out on purpose.
inline const std::vector<std::string> &usable_symbols() {
  static const std::vector<std::string> syms = [] {
    std::vector<std::string> out;
    for (const std::string &s : PhonemeInventory::get().symbols()) {
      if (s != "SIL" && s != "ZH") out.push_back(s);
    }
    return out;
  }();
  return syms;
}

inline const std::vector<std::string> &usable_vowels() {
  static const std::vector<std::string> syms = [] {
    std::vector<std::string> out;
    const auto &inv = PhonemeInventory::get();
    for (const std::string &s : usable_symbols()) {
      if (inv.phoneme_class(inv.index_of(s)) == PhoneticClass::kVowel) out.push_back(s);
    }
    return out;
  }();
  return syms;
}

}  // namespace fixture_detail

// Renders one utterance and returns its samples plus exact alignments.
// Silence pads both ends and occasionally separates phonemes; only non-SIL
// segments are reported. The phoneme distribution is skewed per utterance:
// a small themed subset is drawn more often than the rest, so utterance
// phoneme statistics differ from the corpus average.
inline std::pair<std::vector<double>, std::vector<AlignmentSegment>> synthesize_utterance(
    const fixture_detail::Voice &voice, Rng &rng, int sample_rate) {
  using namespace fixture_detail;
  const auto &inv = PhonemeInventory::get();
  std::vector<std::string> theme;
  {
    const auto &vows = usable_vowels();
    const auto &all = usable_symbols();
    for (int k = 0; k < 4; ++k) {
      theme.push_back(vows[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(vows.size())))]);
    }
    for (int k = 0; k < 2; ++k) {
      theme.push_back(all[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(all.size())))]);
    }
  }
  auto draw_symbol = [&]() -> std::string {
    if (rng.uniform() < 0.55) {
      return theme[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(theme.size())))];
    }
    const auto &all = usable_symbols();
    return all[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(all.size())))];
  };
  auto ms_to_samples = [&](double lo, double hi) {
    return static_cast<int>(rng.uniform(lo, hi) * 1e-3 * static_cast<double>(sample_rate));
  };

  std::vector<double> audio;
  std::vector<AlignmentSegment> segments;
  audio.insert(audio.end(), static_cast<size_t>(ms_to_samples(100.0, 150.0)), 0.0);

  const int n_phones = 13 + static_cast<int>(rng.uniform_int(6));
  for (int p = 0; p < n_phones; ++p) {
    const std::string sym = draw_symbol();
    const PhoneticClass cls = inv.phoneme_class(inv.index_of(sym));
    const bool long_kind = cls == PhoneticClass::kVowel;
    const int n = long_kind ? ms_to_samples(90.0, 150.0) : ms_to_samples(55.0, 105.0);
    const std::vector<double> seg = render_segment(rng, voice, sym, n, sample_rate);
    const double t0 = static_cast<double>(audio.size()) / static_cast<double>(sample_rate);
    audio.insert(audio.end(), seg.begin(), seg.end());
    const double t1 = static_cast<double>(audio.size()) / static_cast<double>(sample_rate);
    segments.push_back({inv.index_of(sym), t0, t1});
    if (rng.uniform() < 0.12) {
      audio.insert(audio.end(), static_cast<size_t>(ms_to_samples(50.0, 90.0)), 0.0);
    }
  }
  audio.insert(audio.end(), static_cast<size_t>(ms_to_samples(100.0, 150.0)), 0.0);

  double peak = 0.0;
  for (double s : audio) peak = std::max(peak, std::abs(s));
  if (peak > 0.0) {
    const double g = 0.5 / peak;
    for (double &s : audio) s *= g;
  }
  return {std::move(audio), std::move(segments)};
}

// Writes wav/, alignments.jsonl and corpus.json under cfg.out_dir. A corpus
// with zero utterances still produces a valid, empty corpus.json.
inline FixtureSummary make_fixture(const FixtureConfig &cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  fs::create_directories(cfg.out_dir + "/wav");

  FixtureSummary summary;
  summary.corpus_json = cfg.out_dir + "/corpus.json";
  summary.alignments_path = cfg.out_dir + "/alignments.jsonl";

  std::ofstream align(summary.alignments_path, std::ios::trunc);
  if (!align) throw Error("cannot write " + summary.alignments_path);
  align.precision(17);

  // A quarter of each speaker's utterances is held out. At the default 20 per
  // speaker that gives 5, whose 10 within-speaker pairs support balanced
  // 160-trial evaluation sets over 8 speakers.
  const int n_test = cfg.utts_per_speaker / 4;
  const auto &inv = PhonemeInventory::get();
  for (int s = 0; s < cfg.n_speakers; ++s) {
    const fixture_detail::Voice voice = fixture_detail::make_voice(s, cfg.seed);
    const std::string speaker = "spk" + std::to_string(s);
    for (int u = 0; u < cfg.utts_per_speaker; ++u) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_utt%02d", speaker.c_str(), u);
      const std::string utt = buf;
      Rng base(cfg.seed);
      Rng rng = base.fork(fnv1a64("utt:" + utt));
      auto [audio, segments] = synthesize_utterance(voice, rng, cfg.sample_rate);

      Waveform wav;
      wav.samples = std::move(audio);
      wav.sample_rate = cfg.sample_rate;
      write_wav(cfg.out_dir + "/wav/" + utt + ".wav", wav);

      nlohmann::json jseg = nlohmann::json::array();
      for (const AlignmentSegment &seg : segments) {
        jseg.push_back({inv.symbol(seg.phoneme), seg.start_s, seg.end_s});
      }
      align << nlohmann::json{{"utt", utt}, {"segments", jseg}}.dump() << "\n";

      summary.utts.push_back({utt, speaker, u >= cfg.utts_per_speaker - n_test ? "test" : "train"});
    }
  }
  align.close();

  nlohmann::json jutts = nlohmann::json::array();
  for (const FixtureUtt &u : summary.utts) {
    jutts.push_back({{"utt", u.utt}, {"speaker", u.speaker}, {"split", u.split}});
  }
  const nlohmann::json corpus = {{"sample_rate", cfg.sample_rate},
                                 {"seed", cfg.seed},
                                 {"n_speakers", cfg.n_speakers},
                                 {"utts_per_speaker", cfg.utts_per_speaker},
                                 {"utts", jutts}};
  std::ofstream cj(summary.corpus_json, std::ios::trunc);
  if (!cj) throw Error("cannot write " + summary.corpus_json);
  cj << corpus.dump(2) << "\n";
  return summary;
}

}  // namespace pdaf

#endif  // PDAF_FIXTURE_HPP_

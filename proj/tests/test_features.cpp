// tests/test_features.cpp
//
// The reference implementation here recomputes everything the slow way: a
// naive DFT per frame and per-filter triangle construction. It shares no code
// with the library path.

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

#include "pdaf/features.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>

#include "test_util.hpp"

namespace pdaf {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    dir_ = fs::temp_directory_path() / ("pdaf_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter_++));
    fs::create_directories(dir_);
  }
  ~TempDir() { fs::remove_all(dir_); }
  std::string path(const std::string &name) const { return (dir_ / name).string(); }

 private:
  static inline int counter_ = 0;
  fs::path dir_;
};

// ---- independent reference implementation -------------------------------

double ref_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

std::vector<double> ref_fbank_frame(const std::vector<double> &samples, size_t start, int win,
                                    int nfft, int sr, int n_mels, double floor_val) {
  // windowed frame
  std::vector<double> x(static_cast<size_t>(nfft), 0.0);
  for (int i = 0; i < win; ++i) {
    const double h = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (win - 1));
    x[static_cast<size_t>(i)] = samples[start + static_cast<size_t>(i)] * h;
  }
  // naive DFT power spectrum
  std::vector<double> power(static_cast<size_t>(nfft / 2 + 1));
  for (int k = 0; k <= nfft / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (int n = 0; n < nfft; ++n) {
      const double ang = -2.0 * M_PI * k * n / nfft;
      re += x[static_cast<size_t>(n)] * std::cos(ang);
      im += x[static_cast<size_t>(n)] * std::sin(ang);
    }
    power[static_cast<size_t>(k)] = re * re + im * im;
  }
  // one filter at a time, triangles linear in mel
  std::vector<double> out(static_cast<size_t>(n_mels));
  const double top = ref_mel(sr / 2.0);
  for (int j = 0; j < n_mels; ++j) {
    const double lo = top * (j + 0) / (n_mels + 1);
    const double mid = top * (j + 1) / (n_mels + 1);
    const double hi = top * (j + 2) / (n_mels + 1);
    double acc = 0.0;
    for (int k = 0; k <= nfft / 2; ++k) {
      const double mk = ref_mel(static_cast<double>(k) * sr / nfft);
      double w = 0.0;
      if (mk > lo && mk <= mid) {
        w = (mk - lo) / (mid - lo);
      } else if (mk > mid && mk < hi) {
        w = (hi - mk) / (hi - mid);
      }
      acc += w * power[static_cast<size_t>(k)];
    }
    out[static_cast<size_t>(j)] = std::log(std::max(acc, floor_val));
  }
  return out;
}

Waveform random_wave(Rng &rng, int sr, double seconds) {
  Waveform w;
  w.sample_rate = sr;
  const size_t n = static_cast<size_t>(sr * seconds);
  w.samples.resize(n);
  for (double &s : w.samples) s = rng.uniform(-0.8, 0.8);
  return w;
}

// ---- WAV ----------------------------------------------------------------

TEST(Wav, RoundTripWithinOneQuantum) {
  TempDir tmp;
  Rng rng(42);
  Waveform w = random_wave(rng, 16000, 0.00625);  // 100 samples
  write_wav(tmp.path("a.wav"), w);
  Waveform r = read_wav(tmp.path("a.wav"));
  ASSERT_EQ(r.samples.size(), w.samples.size());
  EXPECT_EQ(r.sample_rate, 16000);
  for (size_t i = 0; i < w.samples.size(); ++i) {
    EXPECT_LT(std::abs(r.samples[i] - w.samples[i]), 1.0 / 32768.0);
  }
}

TEST(Wav, ScalingIsOverThirtyTwoKi) {
  TempDir tmp;
  Waveform w;
  w.sample_rate = 8000;
  w.samples = {0.5, -0.25};  // exactly representable as int16/32768
  write_wav(tmp.path("s.wav"), w);
  Waveform r = read_wav(tmp.path("s.wav"));
  EXPECT_DOUBLE_EQ(r.samples[0], 0.5);  // int16 16384 -> 0.5
  EXPECT_DOUBLE_EQ(r.samples[1], -0.25);
}

TEST(Wav, HeaderOnlyFileYieldsEmptyWaveform) {
  TempDir tmp;
  Waveform w;
  w.sample_rate = 16000;
  write_wav(tmp.path("e.wav"), w);
  Waveform r = read_wav(tmp.path("e.wav"));
  EXPECT_TRUE(r.samples.empty());
  EXPECT_EQ(r.sample_rate, 16000);
  FbankConfig cfg;
  EXPECT_THROW(compute_fbank(r, cfg), ValidationError);
}

TEST(Wav, RejectsStereoAndNonPcm) {
  TempDir tmp;
  // hand-build a stereo header
  std::ofstream os(tmp.path("st.wav"), std::ios::binary);
  os.write("RIFF", 4);
  io::write_le<uint32_t>(os, 36);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  io::write_le<uint32_t>(os, 16);
  io::write_le<uint16_t>(os, 1);
  io::write_le<uint16_t>(os, 2);  // stereo
  io::write_le<uint32_t>(os, 16000);
  io::write_le<uint32_t>(os, 64000);
  io::write_le<uint16_t>(os, 4);
  io::write_le<uint16_t>(os, 16);
  os.write("data", 4);
  io::write_le<uint32_t>(os, 0);
  os.close();
  EXPECT_THROW(read_wav(tmp.path("st.wav")), UnsupportedFormatError);
}

TEST(Wav, TruncatedFileReportsByteOffset) {
  TempDir tmp;
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(50, 0.1);
  write_wav(tmp.path("t.wav"), w);
  // chop the file mid-data
  std::string full;
  {
    std::ifstream is(tmp.path("t.wav"), std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    full = ss.str();
  }
  {
    std::ofstream os(tmp.path("t.wav"), std::ios::binary | std::ios::trunc);
    os.write(full.data(), static_cast<std::streamsize>(full.size() - 7));
  }
  try {
    read_wav(tmp.path("t.wav"));
    FAIL() << "expected ParseError";
  } catch (const ParseError &e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
  }
  std::ofstream(tmp.path("n.wav"), std::ios::binary) << "JUNKJUNKJUNK";
  EXPECT_THROW(read_wav(tmp.path("n.wav")), UnsupportedFormatError);
}

// ---- filterbank ---------------------------------------------------------

TEST(Fbank, FrameCountFormula) {
  Rng rng(7);
  Waveform w = random_wave(rng, 16000, 1.0);
  FbankConfig cfg;
  cfg.n_mels = 8;
  FeatureMatrix fm = compute_fbank(w, cfg);
  EXPECT_EQ(fm.frames.dim(0), 98);  // floor((16000-400)/160)+1
  EXPECT_EQ(fm.frames.dim(1), 8);
  ASSERT_EQ(fm.frame_times.size(), 98u);
  EXPECT_NEAR(fm.frame_times[0], 0.0125, 1e-12);
  EXPECT_NEAR(fm.frame_times[1], 0.0225, 1e-12);

  for (int rep = 0; rep < 20; ++rep) {
    const int64_t n = 400 + rng.uniform_int(20000);
    Waveform v;
    v.sample_rate = 16000;
    v.samples.assign(static_cast<size_t>(n), 0.01);
    FeatureMatrix f = compute_fbank(v, cfg);
    EXPECT_EQ(f.frames.dim(0), (n - 400) / 160 + 1) << "n=" << n;
  }
}

TEST(Fbank, TooShortSignalNamesRequiredLength) {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(399, 0.0);
  FbankConfig cfg;
  try {
    compute_fbank(w, cfg);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError &e) {
    EXPECT_NE(std::string(e.what()).find("400"), std::string::npos);
  }
}

TEST(Fbank, AllZeroSignalHitsTheLogFloorEverywhere) {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(16000, 0.0);
  FbankConfig cfg;
  cfg.n_mels = 16;
  FeatureMatrix fm = compute_fbank(w, cfg);
  const double want = std::log(1e-10);
  for (double v : fm.frames.data()) EXPECT_DOUBLE_EQ(v, want);
}

TEST(Fbank, PureToneLandsInTheNearestMelBin) {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(16000);
  for (size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = 0.7 * std::sin(2.0 * M_PI * 1000.0 * static_cast<double>(i) / 16000.0);
  }
  FbankConfig cfg;
  cfg.n_mels = 40;
  FeatureMatrix fm = compute_fbank(w, cfg);
  // mean energy per mel bin
  std::vector<double> mean_e(40, 0.0);
  const int64_t t_count = fm.frames.dim(0);
  for (int64_t t = 0; t < t_count; ++t)
    for (int64_t j = 0; j < 40; ++j) mean_e[static_cast<size_t>(j)] += fm.frames.at(t, j);
  int argmax = 0;
  for (int j = 1; j < 40; ++j) {
    if (mean_e[static_cast<size_t>(j)] > mean_e[static_cast<size_t>(argmax)]) argmax = j;
  }
  // filter center frequencies are the interior mel points
  int nearest = 0;
  double best = 1e18;
  for (int j = 0; j < 40; ++j) {
    const double center =
        mel_to_hz(hz_to_mel(8000.0) * static_cast<double>(j + 1) / 41.0);
    if (std::abs(center - 1000.0) < best) {
      best = std::abs(center - 1000.0);
      nearest = j;
    }
  }
  EXPECT_EQ(argmax, nearest);
}

TEST(Fbank, MatchesIndependentReferenceImplementation) {
  Rng rng(2026);
  Waveform w = random_wave(rng, 16000, 0.3);
  // add structure so the comparison is not all floor values
  for (size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = 0.4 * w.samples[i] +
                   0.4 * std::sin(2.0 * M_PI * 440.0 * static_cast<double>(i) / 16000.0);
  }
  for (int n_mels : {26, 128}) {
    FbankConfig cfg;
    cfg.n_mels = n_mels;
    FeatureMatrix fm = compute_fbank(w, cfg);
    const int win = 400, hop = 160, nfft = 512;
    double max_abs = 0.0;
    for (int64_t t = 0; t < fm.frames.dim(0); ++t) {
      const auto ref = ref_fbank_frame(w.samples, static_cast<size_t>(t * hop), win, nfft, 16000,
                                       n_mels, 1e-10);
      for (int j = 0; j < n_mels; ++j) {
        max_abs = std::max(max_abs, std::abs(fm.frames.at(t, j) - ref[static_cast<size_t>(j)]));
      }
    }
    EXPECT_LT(max_abs, 1e-6) << "n_mels=" << n_mels;
  }
}

TEST(Fbank, HopShiftMovesFramesByOne) {
  Rng rng(99);
  Waveform w = random_wave(rng, 16000, 0.5);
  FbankConfig cfg;
  cfg.n_mels = 20;
  FeatureMatrix a = compute_fbank(w, cfg);
  Waveform shifted;
  shifted.sample_rate = 16000;
  shifted.samples.assign(w.samples.begin() + 160, w.samples.end());
  FeatureMatrix b = compute_fbank(shifted, cfg);
  ASSERT_EQ(b.frames.dim(0), a.frames.dim(0) - 1);
  for (int64_t t = 0; t < b.frames.dim(0); ++t) {
    for (int64_t j = 0; j < 20; ++j) {
      EXPECT_NEAR(b.frames.at(t, j), a.frames.at(t + 1, j), 1e-9);
    }
  }
}

TEST(Fbank, AmplificationNeverLowersACell) {
  Rng rng(123);
  Waveform w = random_wave(rng, 16000, 0.2);
  for (double &s : w.samples) s *= 0.4;
  FbankConfig cfg;
  cfg.n_mels = 12;
  FeatureMatrix base = compute_fbank(w, cfg);
  Waveform loud = w;
  for (double &s : loud.samples) s *= 2.0;
  FeatureMatrix amp = compute_fbank(loud, cfg);
  for (int64_t i = 0; i < base.frames.numel(); ++i) {
    EXPECT_GE(amp.frames.data()[static_cast<size_t>(i)],
              base.frames.data()[static_cast<size_t>(i)]);
  }
}

TEST(Fbank, CacheRoundTripsAtSinglePrecision) {
  TempDir tmp;
  Rng rng(5);
  Waveform w = random_wave(rng, 16000, 0.1);
  FbankConfig cfg;
  cfg.n_mels = 10;
  FeatureMatrix fm = compute_fbank(w, cfg);
  write_feature_cache(tmp.path("f.fb"), fm.frames);
  Tensor r = read_feature_cache(tmp.path("f.fb"));
  ASSERT_EQ(r.shape(), fm.frames.shape());
  for (int64_t i = 0; i < r.numel(); ++i) {
    const double a = fm.frames.data()[static_cast<size_t>(i)];
    const double b = r.data()[static_cast<size_t>(i)];
    EXPECT_LE(std::abs(a - b), std::abs(a) * 1e-6 + 1e-6);
  }
  // wrong magic rejected
  std::ofstream(tmp.path("bad.fb"), std::ios::binary) << "NOTAFBNK00000000";
  EXPECT_THROW(read_feature_cache(tmp.path("bad.fb")), UnsupportedFormatError);
}

TEST(Fbank, FftMatchesNaiveDft) {
  Rng rng(31);
  for (int sz : {8, 64, 512}) {
    std::vector<std::complex<double>> a(static_cast<size_t>(sz));
    for (auto &c : a) c = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    auto b = a;
    fft_inplace(b);
    for (int k = 0; k < sz; ++k) {
      std::complex<double> want(0.0, 0.0);
      for (int n = 0; n < sz; ++n) {
        const double ang = -2.0 * M_PI * k * n / sz;
        want += a[static_cast<size_t>(n)] * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      EXPECT_NEAR(std::abs(b[static_cast<size_t>(k)] - want), 0.0, 1e-9) << "size " << sz;
    }
  }
  std::vector<std::complex<double>> odd(6);
  EXPECT_THROW(fft_inplace(odd), DimensionError);
}

}  // namespace
}  // namespace pdaf

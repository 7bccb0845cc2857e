// pdaf/features.hpp
//
// Log-mel filterbank features. One deliberately small pipeline: Hamming
// window, radix-2 FFT power spectrum, triangular mel filters on the HTK
// scale, natural log with a fixed floor. No pre-emphasis, no dithering, no
// normalization; frames are left aligned and the trailing partial frame is
// dropped, so T = floor((N - win)/hop) + 1.

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

#include <complex>

#include "pdaf/tensor.hpp"
#include "pdaf/wav.hpp"

namespace pdaf {

struct FbankConfig {
  int n_mels = 128;
  double win_ms = 25.0;
  double hop_ms = 10.0;
  double mel_fmin = 0.0;
  double mel_fmax = 0.0;  // 0 means sample_rate / 2
  double log_floor = 1e-10;

  int win_samples(int sample_rate) const {
    return static_cast<int>(std::llround(win_ms * sample_rate / 1000.0));
  }
  int hop_samples(int sample_rate) const {
    return static_cast<int>(std::llround(hop_ms * sample_rate / 1000.0));
  }

  void validate() const {
    if (n_mels < 1) throw ValidationError("FbankConfig: n_mels must be >= 1");
    if (win_ms < hop_ms) throw ValidationError("FbankConfig: win_ms must be >= hop_ms");
    if (hop_ms <= 0.0) throw ValidationError("FbankConfig: hop_ms must be positive");
    if (log_floor <= 0.0) throw ValidationError("FbankConfig: log_floor must be positive");
  }
};

struct FeatureMatrix {
  Tensor frames;                    // [T x n_mels]
  std::vector<double> frame_times;  // window-center time of each frame, seconds
};

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p *= 2;
  return p;
}

/// In-place iterative radix-2 FFT. Size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>> &a) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw DimensionError("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

/// Triangular filter weights, linear in mel, rows [n_mels x nfft/2+1].
/// Filter centers are equally spaced in mel between fmin and fmax.
inline std::vector<std::vector<double>> mel_filter_weights(int n_mels, int nfft, int sample_rate,
                                                           double fmin, double fmax) {
  const int n_bins = nfft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> pts(static_cast<size_t>(n_mels) + 2);
  for (size_t j = 0; j < pts.size(); ++j) {
    pts[j] = mel_lo + (mel_hi - mel_lo) * static_cast<double>(j) / static_cast<double>(n_mels + 1);
  }
  std::vector<std::vector<double>> w(static_cast<size_t>(n_mels),
                                     std::vector<double>(static_cast<size_t>(n_bins), 0.0));
  for (int k = 0; k < n_bins; ++k) {
    const double mel_k = hz_to_mel(static_cast<double>(k) * sample_rate / nfft);
    for (int j = 0; j < n_mels; ++j) {
      const double lo = pts[static_cast<size_t>(j)];
      const double mid = pts[static_cast<size_t>(j) + 1];
      const double hi = pts[static_cast<size_t>(j) + 2];
      double v = 0.0;
      if (mel_k > lo && mel_k < hi) {
        v = mel_k <= mid ? (mel_k - lo) / (mid - lo) : (hi - mel_k) / (hi - mid);
      }
      w[static_cast<size_t>(j)][static_cast<size_t>(k)] = v;
    }
  }
  return w;
}

inline FeatureMatrix compute_fbank(const Waveform &wav, const FbankConfig &cfg) {
  cfg.validate();
  if (wav.sample_rate <= 0) throw ValidationError("compute_fbank: sample_rate must be positive");
  const int win = cfg.win_samples(wav.sample_rate);
  const int hop = cfg.hop_samples(wav.sample_rate);
  const int64_t n = static_cast<int64_t>(wav.samples.size());
  if (n < win) {
    throw ValidationError("compute_fbank: signal too short, need at least " +
                          std::to_string(win) + " samples, got " + std::to_string(n));
  }
  const int64_t num_frames = (n - win) / hop + 1;
  const int nfft = next_pow2(win);
  const double fmax = cfg.mel_fmax > 0.0 ? cfg.mel_fmax : wav.sample_rate / 2.0;
  if (fmax <= cfg.mel_fmin) throw ValidationError("compute_fbank: mel_fmax must exceed mel_fmin");
  const auto filt = mel_filter_weights(cfg.n_mels, nfft, wav.sample_rate, cfg.mel_fmin, fmax);

  std::vector<double> window(static_cast<size_t>(win));
  for (int i = 0; i < win; ++i) {
    window[static_cast<size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (win - 1));
  }

  std::vector<double> cells(static_cast<size_t>(num_frames * cfg.n_mels));
  std::vector<double> times(static_cast<size_t>(num_frames));
  std::vector<std::complex<double>> buf(static_cast<size_t>(nfft));
  std::vector<double> power(static_cast<size_t>(nfft / 2 + 1));
  for (int64_t t = 0; t < num_frames; ++t) {
    const int64_t start = t * hop;
    for (int i = 0; i < win; ++i) {
      buf[static_cast<size_t>(i)] = wav.samples[static_cast<size_t>(start + i)] *
                                    window[static_cast<size_t>(i)];
    }
    for (int i = win; i < nfft; ++i) buf[static_cast<size_t>(i)] = 0.0;
    fft_inplace(buf);
    for (int k = 0; k <= nfft / 2; ++k) power[static_cast<size_t>(k)] = std::norm(buf[static_cast<size_t>(k)]);
    for (int j = 0; j < cfg.n_mels; ++j) {
      double e = 0.0;
      const auto &row = filt[static_cast<size_t>(j)];
      for (int k = 0; k <= nfft / 2; ++k) e += row[static_cast<size_t>(k)] * power[static_cast<size_t>(k)];
      cells[static_cast<size_t>(t * cfg.n_mels + j)] = std::log(std::max(e, cfg.log_floor));
    }
    times[static_cast<size_t>(t)] = (static_cast<double>(start) + win / 2.0) / wav.sample_rate;
  }
  FeatureMatrix fm;
  fm.frames = Tensor::from_data({num_frames, cfg.n_mels}, std::move(cells));
  fm.frame_times = std::move(times);
  return fm;
}

// Feature cache: magic "PDAF-FB1", u32 frame count, u32 mel count, then
// frame-major f32 cells, all little endian.

inline constexpr char kFeatureCacheMagic[8] = {'P', 'D', 'A', 'F', '-', 'F', 'B', '1'};

inline void write_feature_cache(const std::string &path, const Tensor &frames) {
  if (frames.ndim() != 2) throw DimensionError("write_feature_cache: need [T x n_mels]");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_feature_cache: cannot open " + path);
  os.write(kFeatureCacheMagic, 8);
  io::write_le<uint32_t>(os, static_cast<uint32_t>(frames.dim(0)));
  io::write_le<uint32_t>(os, static_cast<uint32_t>(frames.dim(1)));
  for (double v : frames.data()) io::write_le<float>(os, static_cast<float>(v));
  if (!os) throw Error("write_feature_cache: write failed for " + path);
}

inline Tensor read_feature_cache(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("read_feature_cache: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (is.gcount() != 8 || std::memcmp(magic, kFeatureCacheMagic, 8) != 0) {
    throw UnsupportedFormatError(path + ": not a feature cache file");
  }
  const auto t = io::read_le<uint32_t>(is, path + " frame count");
  const auto m = io::read_le<uint32_t>(is, path + " mel count");
  if (m == 0) throw ParseError(path + ": zero mel count");
  std::vector<double> cells(static_cast<size_t>(t) * m);
  for (double &v : cells) v = static_cast<double>(io::read_le<float>(is, path + " cell"));
  return Tensor::from_data({static_cast<int64_t>(t), static_cast<int64_t>(m)}, std::move(cells));
}

}  // namespace pdaf

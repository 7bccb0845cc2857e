// pdaf/wav.hpp
//
// Minimal RIFF/WAVE support: 16-bit PCM, mono. Anything else is rejected up
// front rather than resampled or downmixed.

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

#include "pdaf/common.hpp"

namespace pdaf {

struct Waveform {
  std::vector<double> samples;  // int16 values scaled by 1/32768, so [-1, 1)
  int sample_rate = 0;
};

namespace detail {

inline void need_bytes(std::istream &is, char *dst, size_t n, const std::string &path,
                       size_t &offset) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n) {
    throw ParseError(path + ": truncated at byte " + std::to_string(offset + static_cast<size_t>(is.gcount())));
  }
  offset += n;
}

template <typename T>
T read_le_at(std::istream &is, const std::string &path, size_t &offset) {
  char buf[sizeof(T)];
  need_bytes(is, buf, sizeof(T), path, offset);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline Waveform read_wav(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("read_wav: cannot open " + path);
  size_t off = 0;
  char magic[4];
  detail::need_bytes(is, magic, 4, path, off);
  if (std::memcmp(magic, "RIFF", 4) != 0) throw UnsupportedFormatError(path + ": not a RIFF file");
  detail::read_le_at<uint32_t>(is, path, off);  // RIFF payload size, unused
  detail::need_bytes(is, magic, 4, path, off);
  if (std::memcmp(magic, "WAVE", 4) != 0) throw UnsupportedFormatError(path + ": not a WAVE file");

  bool have_fmt = false;
  Waveform w;
  while (true) {
    is.peek();
    if (is.eof()) break;
    char id[4];
    detail::need_bytes(is, id, 4, path, off);
    const uint32_t size = detail::read_le_at<uint32_t>(is, path, off);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw ParseError(path + ": fmt chunk too small");
      const uint16_t format = detail::read_le_at<uint16_t>(is, path, off);
      const uint16_t channels = detail::read_le_at<uint16_t>(is, path, off);
      const uint32_t rate = detail::read_le_at<uint32_t>(is, path, off);
      detail::read_le_at<uint32_t>(is, path, off);  // byte rate
      detail::read_le_at<uint16_t>(is, path, off);  // block align
      const uint16_t bits = detail::read_le_at<uint16_t>(is, path, off);
      if (format != 1) throw UnsupportedFormatError(path + ": only PCM supported, format tag " + std::to_string(format));
      if (channels != 1) throw UnsupportedFormatError(path + ": only mono supported, got " + std::to_string(channels) + " channels");
      if (bits != 16) throw UnsupportedFormatError(path + ": only 16-bit supported, got " + std::to_string(bits));
      w.sample_rate = static_cast<int>(rate);
      have_fmt = true;
      for (uint32_t i = 16; i < size; ++i) detail::read_le_at<uint8_t>(is, path, off);
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw ParseError(path + ": data chunk before fmt chunk");
      if (size % 2 != 0) throw ParseError(path + ": odd data chunk size for 16-bit samples");
      const size_t n = size / 2;
      w.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        w.samples[i] = static_cast<double>(detail::read_le_at<int16_t>(is, path, off)) / 32768.0;
      }
    } else {
      for (uint32_t i = 0; i < size; ++i) detail::read_le_at<uint8_t>(is, path, off);
    }
    // chunks are word aligned; odd sizes carry a pad byte
    if (size % 2 == 1) {
      is.peek();
      if (!is.eof()) detail::read_le_at<uint8_t>(is, path, off);
    }
  }
  if (!have_fmt) throw ParseError(path + ": missing fmt chunk");
  return w;
}

inline void write_wav(const std::string &path, const Waveform &w) {
  if (w.sample_rate <= 0) throw ValidationError("write_wav: sample_rate must be positive");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_wav: cannot open " + path + " for writing");
  const uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
  os.write("RIFF", 4);
  io::write_le<uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  io::write_le<uint32_t>(os, 16);
  io::write_le<uint16_t>(os, 1);  // PCM
  io::write_le<uint16_t>(os, 1);  // mono
  io::write_le<uint32_t>(os, static_cast<uint32_t>(w.sample_rate));
  io::write_le<uint32_t>(os, static_cast<uint32_t>(w.sample_rate * 2));
  io::write_le<uint16_t>(os, 2);
  io::write_le<uint16_t>(os, 16);
  os.write("data", 4);
  io::write_le<uint32_t>(os, data_bytes);
  for (double s : w.samples) {
    double v = std::lround(s * 32768.0);
    v = std::min(32767.0, std::max(-32768.0, v));
    io::write_le<int16_t>(os, static_cast<int16_t>(v));
  }
  if (!os) throw Error("write_wav: write failed for " + path);
}

}  // namespace pdaf

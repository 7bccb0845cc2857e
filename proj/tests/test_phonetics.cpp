// tests/test_phonetics.cpp

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

#include "pdaf/phonetics.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace pdaf {
namespace {

TEST(Inventory, HasFortyOnePhonemesWithSilAtZero) {
  const auto &inv = PhonemeInventory::get();
  EXPECT_EQ(inv.size(), 41);
  EXPECT_EQ(inv.symbol(0), "SIL");
  EXPECT_EQ(inv.index_of("SIL"), 0);
  EXPECT_EQ(inv.index_of(inv.symbol(17)), 17);
  EXPECT_THROW(inv.index_of("QQ"), ValidationError);
  EXPECT_THROW(inv.symbol(41), ValidationError);
  EXPECT_THROW(inv.symbol(-1), ValidationError);
}

TEST(Inventory, ClassesPartitionTheNonSilencePhonemes) {
  const auto &inv = PhonemeInventory::get();
  std::set<int> seen;
  size_t total = 0;
  for (const auto &[name, cls] : phonetic_class_names()) {
    for (int idx : inv.class_members(cls)) {
      EXPECT_TRUE(seen.insert(idx).second) << inv.symbol(idx) << " in two classes";
      EXPECT_NE(idx, PhonemeInventory::kSilIndex);
      ++total;
    }
  }
  EXPECT_EQ(total, 40u);
  EXPECT_THROW(inv.phoneme_class(PhonemeInventory::kSilIndex), ValidationError);
}

TEST(Inventory, VowelClassIsTheFifteenExpectedSymbols) {
  const auto &inv = PhonemeInventory::get();
  const std::set<std::string> want = {"AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER",
                                      "EY", "IH", "IY", "OW", "OY", "UH", "UW"};
  std::set<std::string> got;
  for (int idx : inv.class_members(PhoneticClass::kVowel)) got.insert(inv.symbol(idx));
  EXPECT_EQ(got, want);
}

TEST(Inventory, SpotCheckConsonantClasses) {
  const auto &inv = PhonemeInventory::get();
  EXPECT_EQ(inv.phoneme_class(inv.index_of("S")), PhoneticClass::kSibilant);
  EXPECT_EQ(inv.phoneme_class(inv.index_of("ZH")), PhoneticClass::kSibilant);
  EXPECT_EQ(inv.phoneme_class(inv.index_of("CH")), PhoneticClass::kAffricate);
  EXPECT_EQ(inv.phoneme_class(inv.index_of("L")), PhoneticClass::kLateral);
  EXPECT_EQ(inv.phoneme_class(inv.index_of("NG")), PhoneticClass::kNasal);
  EXPECT_EQ(inv.phoneme_class(inv.index_of("W")), PhoneticClass::kApproximant);
  EXPECT_EQ(inv.phoneme_class(inv.index_of("TH")), PhoneticClass::kFricative);
  EXPECT_EQ(inv.phoneme_class(inv.index_of("K")), PhoneticClass::kStop);
}

TEST(Alignments, ParsesHandWrittenFixture) {
  std::stringstream ss;
  ss << R"({"utt":"u1","segments":[["SIL",0.0,0.1],["AA",0.1,0.3]]})" << "\n"
     << "\n"
     << R"({"utt":"u2","segments":[]})" << "\n"
     << R"({"utt":"u3","segments":[["IY",0.5,0.9],["S",0.1,0.5]]})" << "\n";
  AlignmentMap m = parse_alignments(ss);
  ASSERT_EQ(m.size(), 3u);
  const auto &u1 = m.at("u1");
  ASSERT_EQ(u1.size(), 2u);
  EXPECT_EQ(u1[0].phoneme, PhonemeInventory::kSilIndex);
  EXPECT_EQ(u1[1].phoneme, PhonemeInventory::get().index_of("AA"));
  EXPECT_DOUBLE_EQ(u1[1].start_s, 0.1);
  EXPECT_TRUE(m.at("u2").empty());
  // out-of-order input comes back sorted
  const auto &u3 = m.at("u3");
  EXPECT_EQ(u3[0].phoneme, PhonemeInventory::get().index_of("S"));
  EXPECT_EQ(u3[1].phoneme, PhonemeInventory::get().index_of("IY"));
}

TEST(Alignments, ErrorsCarrySymbolLineAndUtterance) {
  {
    std::stringstream ss;
    ss << R"({"utt":"ok","segments":[]})" << "\n"
       << R"({"utt":"bad","segments":[["QQ",0.0,0.1]]})" << "\n";
    try {
      parse_alignments(ss);
      FAIL() << "expected ValidationError";
    } catch (const ValidationError &e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find("QQ"), std::string::npos);
      EXPECT_NE(msg.find(":2"), std::string::npos);
    }
  }
  {
    std::stringstream ss;
    ss << R"({"utt":"ov","segments":[["AA",0.0,0.2],["IY",0.1,0.3]]})" << "\n";
    try {
      parse_alignments(ss);
      FAIL() << "expected ValidationError";
    } catch (const ValidationError &e) {
      EXPECT_NE(std::string(e.what()).find("ov"), std::string::npos);
    }
  }
  {
    std::stringstream ss;
    ss << R"({"utt":"neg","segments":[["AA",0.3,0.3]]})" << "\n";
    EXPECT_THROW(parse_alignments(ss), ValidationError);
  }
  {
    std::stringstream ss;
    ss << "not json\n";
    EXPECT_THROW(parse_alignments(ss), ParseError);
  }
  {
    std::stringstream ss;
    ss << R"({"utt":"d","segments":[]})" << "\n" << R"({"utt":"d","segments":[]})" << "\n";
    EXPECT_THROW(parse_alignments(ss), ValidationError);
  }
}

TEST(FrameLabels, CenterRuleMatchesSpeccedExample) {
  const auto &inv = PhonemeInventory::get();
  std::vector<AlignmentSegment> segs = {{inv.index_of("AA"), 0.0, 0.05}};
  // centers at 12.5, 22.5, 32.5, 42.5, 52.5 ms; the first four fall in [0,50)
  std::vector<int> labels = label_frames(segs, 6, 10.0, 25.0);
  for (int t = 0; t < 4; ++t) EXPECT_EQ(labels[static_cast<size_t>(t)], inv.index_of("AA"));
  EXPECT_EQ(labels[4], PhonemeInventory::kSilIndex);
  EXPECT_EQ(labels[5], PhonemeInventory::kSilIndex);
}

TEST(FrameLabels, EmptySegmentsGiveAllSilence) {
  std::vector<int> labels = label_frames({}, 5, 10.0, 25.0);
  for (int l : labels) EXPECT_EQ(l, PhonemeInventory::kSilIndex);
}

TEST(FrameLabels, RandomTilingsMatchBucketOracle) {
  const auto &inv = PhonemeInventory::get();
  Rng rng(808);
  for (int rep = 0; rep < 30; ++rep) {
    // random non-overlapping tiling with gaps
    std::vector<AlignmentSegment> segs;
    double t = 0.0;
    while (t < 2.0) {
      const double dur = rng.uniform(0.02, 0.2);
      if (rng.uniform() < 0.7) {
        AlignmentSegment s;
        s.phoneme = 1 + static_cast<int>(rng.uniform_int(40));
        s.start_s = t;
        s.end_s = t + dur;
        segs.push_back(s);
      }
      t += dur;
    }
    const int64_t frames = 150;
    std::vector<int> got = label_frames(segs, frames, 10.0, 25.0);
    // oracle: paint a fine-grained timeline, then look up each center's bucket
    const double res = 1e-4;
    std::vector<int> timeline(static_cast<size_t>(3.0 / res), PhonemeInventory::kSilIndex);
    for (const auto &s : segs) {
      for (size_t b = static_cast<size_t>(std::ceil(s.start_s / res));
           b < static_cast<size_t>(std::ceil(s.end_s / res)) && b < timeline.size(); ++b) {
        timeline[b] = s.phoneme;
      }
    }
    for (int64_t f = 0; f < frames; ++f) {
      const double center = (static_cast<double>(f) * 10.0 + 12.5) / 1000.0;
      const size_t bucket = static_cast<size_t>(center / res);
      EXPECT_EQ(got[static_cast<size_t>(f)], timeline[bucket])
          << "rep " << rep << " frame " << f << " center " << center;
    }
    (void)inv;
  }
}

TEST(KeyMask, SilenceIsAlwaysClosed) {
  const auto &inv = PhonemeInventory::get();
  std::vector<int> labels = {PhonemeInventory::kSilIndex, inv.index_of("AA"), inv.index_of("IY")};
  std::vector<bool> mask = build_key_mask(labels);
  EXPECT_EQ(mask, (std::vector<bool>{false, true, true}));
  mask = build_key_mask(labels, {inv.index_of("AA")});
  EXPECT_EQ(mask, (std::vector<bool>{false, false, true}));
}

TEST(KeyMask, FullyMaskedUtteranceIsAnError) {
  const auto &inv = PhonemeInventory::get();
  std::vector<int> all_sil(4, PhonemeInventory::kSilIndex);
  EXPECT_THROW(build_key_mask(all_sil), ValidationError);
  std::vector<int> labels = {inv.index_of("AA"), inv.index_of("IY")};
  std::set<int> everything;
  for (int i = 1; i < inv.size(); ++i) everything.insert(i);
  EXPECT_THROW(build_key_mask(labels, everything), ValidationError);
}

TEST(KeyMask, ClassAblationMasksExactlyTheClassMembers) {
  const auto &inv = PhonemeInventory::get();
  std::vector<int> labels;
  for (int i = 0; i < inv.size(); ++i) labels.push_back(i);
  const std::set<int> vowels = resolve_ablation_spec("Vowels");
  EXPECT_EQ(vowels.size(), 15u);
  std::vector<bool> mask = build_key_mask(labels, vowels);
  for (size_t t = 0; t < labels.size(); ++t) {
    const int idx = labels[t];
    if (idx == PhonemeInventory::kSilIndex) {
      EXPECT_FALSE(mask[t]);
    } else if (inv.phoneme_class(idx) == PhoneticClass::kVowel) {
      EXPECT_FALSE(mask[t]) << inv.symbol(idx);
    } else {
      EXPECT_TRUE(mask[t]) << inv.symbol(idx);
    }
  }
}

TEST(AblationSpec, ParsesClassesAndSymbolLists) {
  const auto &inv = PhonemeInventory::get();
  EXPECT_EQ(resolve_ablation_spec("Stop").size(), 7u);
  EXPECT_EQ(resolve_ablation_spec("Lateral"), std::set<int>{inv.index_of("L")});
  const std::set<int> want = {inv.index_of("S"), inv.index_of("Z")};
  EXPECT_EQ(resolve_ablation_spec("S, Z"), want);
  EXPECT_EQ(resolve_ablation_spec(""), std::set<int>{});
  EXPECT_THROW(resolve_ablation_spec("QQ"), ValidationError);
  EXPECT_THROW(resolve_ablation_spec("AA,,IY"), ValidationError);
}

}  // namespace
}  // namespace pdaf

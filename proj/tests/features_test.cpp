#include "tapnet/features.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "test_util.hpp"

using namespace tapnet;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Synthetic recording: angle(t) = offset + amp * sin(2 pi f t), hand of unit
// rays rotated so the thumb-index opening matches, wrist following `wrist_fn`.
LandmarkSequence synth_recording(double freq_hz, double seconds, double rate_hz,
                                 double offset_deg = 30.0, double amp_deg = 25.0,
                                 const std::function<std::array<double, 2>(double)>&
                                     wrist_fn = nullptr,
                                 const std::function<bool(std::size_t)>& valid_fn = nullptr,
                                 double noise_amp_deg = 0.0, std::uint64_t noise_seed = 0) {
  LandmarkSequence seq;
  Rng noise(noise_seed);
  const auto frames = static_cast<std::size_t>(seconds * rate_hz);
  for (std::size_t i = 0; i < frames; ++i) {
    const double t = static_cast<double>(i) / rate_hz;
    double angle = offset_deg + amp_deg * std::sin(2.0 * kPi * freq_hz * t);
    if (noise_amp_deg > 0.0) angle += noise_amp_deg * (2.0 * noise.next_double() - 1.0);
    const double half = 0.5 * angle * kPi / 180.0;
    LandmarkFrame f;
    f.t = t;
    f.valid = valid_fn ? valid_fn(i) : true;
    const std::array<double, 2> wrist = wrist_fn ? wrist_fn(t) : std::array<double, 2>{0, 0};
    f.pts[kWristIdx] = wrist;
    f.pts[kThumbTipIdx] = {wrist[0] + std::cos(half), wrist[1] + std::sin(half)};
    f.pts[kIndexTipIdx] = {wrist[0] + std::cos(-half), wrist[1] + std::sin(-half)};
    seq.frames.push_back(f);
  }
  return seq;
}

AngleSignal plain_signal(const std::vector<double>& angles, double rate) {
  AngleSignal s;
  s.angles = angles;
  s.valid.assign(angles.size(), 1);
  s.rate_hz = rate;
  return s;
}

}  // namespace

TEST(AngleSignal, PerpendicularRaysAreNinetyDegrees) {
  LandmarkSequence seq;
  for (int i = 0; i < 2; ++i) {
    LandmarkFrame f;
    f.t = i;
    f.valid = true;
    f.pts[kWristIdx] = {0, 0};
    f.pts[kThumbTipIdx] = {1, 0};
    f.pts[kIndexTipIdx] = {0, 1};
    seq.frames.push_back(f);
  }
  AngleSignal sig = compute_angle_signal(seq);
  EXPECT_NEAR(sig.angles[0], 90.0, 1e-12);
}

TEST(AngleSignal, CollinearRaysAreZeroDegrees) {
  LandmarkSequence seq;
  for (int i = 0; i < 2; ++i) {
    LandmarkFrame f;
    f.t = i;
    f.valid = true;
    f.pts[kWristIdx] = {1, 1};
    f.pts[kThumbTipIdx] = {3, 1};
    f.pts[kIndexTipIdx] = {5, 1};
    seq.frames.push_back(f);
  }
  AngleSignal sig = compute_angle_signal(seq);
  EXPECT_NEAR(sig.angles[0], 0.0, 1e-9);
}

TEST(AngleSignal, RecoversSyntheticSinusoid) {
  LandmarkSequence seq = synth_recording(2.0, 3.0, 30.0);
  AngleSignal sig = compute_angle_signal(seq);
  EXPECT_NEAR(sig.rate_hz, 30.0, 1e-6);
  for (std::size_t i = 0; i < sig.size(); ++i) {
    const double t = static_cast<double>(i) / 30.0;
    const double want = 30.0 + 25.0 * std::sin(2.0 * kPi * 2.0 * t);
    ASSERT_TRUE(sig.valid[i]);
    EXPECT_NEAR(sig.angles[i], want, 1e-9);
  }
}

TEST(AngleSignal, DegenerateRayMarksFrameInvalid) {
  LandmarkSequence seq;
  for (int i = 0; i < 3; ++i) {
    LandmarkFrame f;
    f.t = i;
    f.valid = true;
    f.pts[kWristIdx] = {0, 0};
    f.pts[kThumbTipIdx] = i == 1 ? std::array<double, 2>{0, 0}  // tip on wrist
                                 : std::array<double, 2>{1, 0};
    f.pts[kIndexTipIdx] = {0, 1};
    seq.frames.push_back(f);
  }
  AngleSignal sig = compute_angle_signal(seq);
  EXPECT_TRUE(sig.valid[0]);
  EXPECT_FALSE(sig.valid[1]);
  EXPECT_TRUE(sig.valid[2]);
}

TEST(AngleSignal, FewValidFramesRejected) {
  LandmarkSequence seq;
  LandmarkFrame f;
  f.t = 0;
  f.valid = true;
  f.pts[kThumbTipIdx] = {1, 0};
  f.pts[kIndexTipIdx] = {0, 1};
  seq.frames.push_back(f);
  EXPECT_THROW(compute_angle_signal(seq), DataError);
}

TEST(InterpolateGaps, MidpointFillsSingleGap) {
  AngleSignal sig = plain_signal({10.0, 0.0, 20.0, 30.0}, 30.0);
  sig.valid = {1, 0, 1, 1};
  auto segments = interpolate_gaps(sig, 3);
  ASSERT_EQ(segments.size(), 1u);
  EXPECT_NEAR(segments[0].angles[1], 15.0, 1e-12);
  EXPECT_EQ(segments[0].start_frame, 0u);
}

TEST(InterpolateGaps, LongGapSplitsSignal) {
  AngleSignal sig = plain_signal({1, 2, 0, 0, 0, 7, 8}, 30.0);
  sig.valid = {1, 1, 0, 0, 0, 1, 1};
  auto segments = interpolate_gaps(sig, 2);
  ASSERT_EQ(segments.size(), 2u);
  EXPECT_EQ(segments[0].size(), 2u);
  EXPECT_EQ(segments[1].size(), 2u);
  EXPECT_EQ(segments[1].start_frame, 5u);
}

TEST(InterpolateGaps, NoValidFramesRejected) {
  AngleSignal sig = plain_signal({1, 2}, 30.0);
  sig.valid = {0, 0};
  EXPECT_THROW(interpolate_gaps(sig, 3), DataError);
}

TEST(InterpolateGaps, MaskedSinusoidReconstructsWell) {
  // 5% of frames masked, max_gap 3, 30 Hz: RMS error below 1 degree.
  const double rate = 30.0;
  const std::size_t n = 300;
  std::vector<double> clean(n);
  for (std::size_t i = 0; i < n; ++i) {
    clean[i] = 30.0 + 25.0 * std::sin(2.0 * kPi * 2.0 * static_cast<double>(i) / rate);
  }
  AngleSignal sig = plain_signal(clean, rate);
  Rng rng(77);
  std::size_t masked = 0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (rng.next_double() < 0.05) {
      sig.valid[i] = 0;
      sig.angles[i] = -999.0;  // must be ignored
      ++masked;
    }
  }
  ASSERT_GT(masked, 0u);
  auto segments = interpolate_gaps(sig, 3);
  ASSERT_EQ(segments.size(), 1u);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = segments[0].angles[i] - clean[i];
    sq += d * d;
  }
  EXPECT_LT(std::sqrt(sq / static_cast<double>(n)), 1.0);
}

TEST(DetectTaps, TwoHertzSinusoidHasTwentyPeaks) {
  LandmarkSequence seq = synth_recording(2.0, 10.0, 30.0);
  AngleSignal sig = compute_angle_signal(seq);
  TapEvents events = detect_taps(sig);
  EXPECT_NEAR(static_cast<double>(events.peaks.size()), 20.0, 1.0);
}

TEST(DetectTaps, ConstantSignalHasInsufficientTaps) {
  AngleSignal sig = plain_signal(std::vector<double>(60, 42.0), 30.0);
  EXPECT_THROW(detect_taps(sig), DataError);
}

TEST(DetectTaps, NoiseDoesNotChangePeakCount) {
  LandmarkSequence clean = synth_recording(2.0, 10.0, 30.0);
  LandmarkSequence noisy = synth_recording(2.0, 10.0, 30.0, 30.0, 25.0, nullptr, nullptr,
                                           /*noise_amp_deg=*/0.25, /*noise_seed=*/9);
  TapEvents a = detect_taps(compute_angle_signal(clean));
  TapEvents b = detect_taps(compute_angle_signal(noisy));
  EXPECT_EQ(a.peaks.size(), b.peaks.size());
}

TEST(DetectTaps, ShortSegmentRejected) {
  AngleSignal sig = plain_signal(std::vector<double>(20, 1.0), 30.0);  // 0.66 s
  EXPECT_THROW(detect_taps(sig), DataError);
}

TEST(DetectTaps, AlternationHolds) {
  LandmarkSequence seq = synth_recording(3.0, 5.0, 30.0);
  AngleSignal sig = compute_angle_signal(seq);
  TapEvents ev = detect_taps(sig);
  ASSERT_GE(ev.peaks.size(), 2u);
  ASSERT_GE(ev.valleys.size(), 1u);
  // Between consecutive peaks there is exactly one valley.
  for (std::size_t k = 0; k + 1 < ev.peaks.size(); ++k) {
    std::size_t between = 0;
    for (std::size_t v : ev.valleys) {
      if (v > ev.peaks[k] && v < ev.peaks[k + 1]) ++between;
    }
    EXPECT_EQ(between, 1u);
  }
  for (double p : ev.periods) EXPECT_GT(p, 0.0);
}

TEST(Summarize, ConstantSeries) {
  auto stats = summarize({3.0, 3.0, 3.0, 3.0}, {0.0, 1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(stats[0], 3.0);  // mean
  EXPECT_DOUBLE_EQ(stats[1], 0.0);  // std
  EXPECT_DOUBLE_EQ(stats[2], 3.0);  // median
  EXPECT_DOUBLE_EQ(stats[3], 3.0);  // min
  EXPECT_DOUBLE_EQ(stats[4], 3.0);  // max
  EXPECT_DOUBLE_EQ(stats[5], 0.0);  // cv
  EXPECT_DOUBLE_EQ(stats[6], 0.0);  // slope
  EXPECT_DOUBLE_EQ(stats[7], 0.0);  // iqr
}

TEST(Summarize, LinearTrendSlope) {
  // y = 2x + 1 over x = 0..4.
  auto stats = summarize({1, 3, 5, 7, 9}, {0, 1, 2, 3, 4});
  EXPECT_NEAR(stats[6], 2.0, 1e-12);
}

TEST(Summarize, EmptyFamilyRejected) {
  EXPECT_THROW(summarize({}, {}), DataError);
}

TEST(ExtractFeatures, FrequencyFamilyRecoversTwoHertz) {
  LandmarkSequence seq = synth_recording(2.0, 10.0, 30.0);
  AngleSignal sig = compute_angle_signal(seq);
  TapEvents ev = detect_taps(sig);
  std::vector<std::array<double, 2>> wrist(sig.size(), {0.0, 0.0});
  std::vector<double> row = extract_features(sig, wrist, ev);
  ASSERT_EQ(row.size(), 57u);
  // Frequency family occupies slots 16..23; slot 16 is its mean.
  EXPECT_NEAR(row[16], 2.0, 0.05);
}

TEST(ExtractFeatures, AmplitudeFamilyIsPeakToValley) {
  LandmarkSequence seq = synth_recording(2.0, 10.0, 30.0);
  AngleSignal sig = compute_angle_signal(seq);
  TapEvents ev = detect_taps(sig);
  std::vector<std::array<double, 2>> wrist(sig.size(), {0.0, 0.0});
  std::vector<double> row = extract_features(sig, wrist, ev);
  // Amplitude family mean (slot 32) is close to the 50 degree peak-to-valley swing.
  EXPECT_NEAR(row[32], 50.0, 0.05 * 50.0);
}

TEST(ExtractFeatures, StationaryWristGivesZeroDisplacementFamily) {
  LandmarkSequence seq = synth_recording(2.0, 10.0, 30.0);
  AngleSignal sig = compute_angle_signal(seq);
  TapEvents ev = detect_taps(sig);
  std::vector<std::array<double, 2>> wrist(sig.size(), {0.4, 0.7});
  std::vector<double> row = extract_features(sig, wrist, ev);
  // Wrist family occupies slots 40..47.
  for (std::size_t s = 40; s < 48; ++s) EXPECT_NEAR(row[s], 0.0, 1e-12);
}

TEST(ExtractFeatures, LastSlotIsTapCount) {
  LandmarkSequence seq = synth_recording(2.0, 10.0, 30.0);
  AngleSignal sig = compute_angle_signal(seq);
  TapEvents ev = detect_taps(sig);
  std::vector<std::array<double, 2>> wrist(sig.size(), {0.0, 0.0});
  std::vector<double> row = extract_features(sig, wrist, ev);
  EXPECT_DOUBLE_EQ(row[56], static_cast<double>(ev.peaks.size()));
}

TEST(ExtractFeatures, DeterministicForSameInput) {
  LandmarkSequence seq = synth_recording(2.5, 8.0, 30.0);
  std::vector<double> a = extract_from_landmarks(seq);
  std::vector<double> b = extract_from_landmarks(seq);
  EXPECT_EQ(a, b);  // bitwise
}

TEST(ExtractFeatures, FrequencySweepWithinTwoPercent) {
  for (double f : {0.5, 1.0, 2.0, 3.0, 4.0}) {
    LandmarkSequence seq = synth_recording(f, 10.0, 30.0);
    std::vector<double> row = extract_from_landmarks(seq);
    EXPECT_NEAR(row[16], f, 0.02 * f) << "frequency " << f;
  }
}

TEST(ExtractFeatures, MovingWristShowsDisplacement) {
  auto wrist_fn = [](double t) {
    return std::array<double, 2>{0.05 * std::sin(2.0 * kPi * t), 0.0};
  };
  LandmarkSequence seq = synth_recording(2.0, 10.0, 30.0, 30.0, 25.0, wrist_fn);
  std::vector<double> row = extract_from_landmarks(seq);
  EXPECT_GT(row[40], 1e-3);  // wrist displacement mean
}

TEST(LandmarkCsv, RoundTripThroughPipeline) {
  testutil::TempDir dir("landmarks");
  LandmarkSequence seq = synth_recording(2.0, 5.0, 30.0);
  const std::string path = dir.file("rec.csv");
  std::ofstream out(path);
  out << "t";
  for (int k = 0; k < 21; ++k) out << ",x" << k << ",y" << k;
  out << ",valid\n";
  char buf[32];
  for (const auto& f : seq.frames) {
    std::snprintf(buf, sizeof(buf), "%.17g", f.t);
    out << buf;
    for (const auto& p : f.pts) {
      std::snprintf(buf, sizeof(buf), "%.17g", p[0]);
      out << ',' << buf;
      std::snprintf(buf, sizeof(buf), "%.17g", p[1]);
      out << ',' << buf;
    }
    out << ',' << (f.valid ? 1 : 0) << '\n';
  }
  out.close();
  LandmarkSequence loaded = load_landmark_csv(path);
  ASSERT_EQ(loaded.frames.size(), seq.frames.size());
  std::vector<double> a = extract_from_landmarks(seq);
  std::vector<double> b = extract_from_landmarks(loaded);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(LandmarkCsv, NonIncreasingTimestampsRejected) {
  testutil::TempDir dir("landmarks_bad");
  const std::string path = dir.file("bad.csv");
  std::ofstream out(path);
  out << "t";
  for (int k = 0; k < 21; ++k) out << ",x" << k << ",y" << k;
  out << ",valid\n";
  for (int i = 0; i < 2; ++i) {
    out << "0.5";  // same timestamp twice
    for (int k = 0; k < 21; ++k) out << ",0,0";
    out << ",1\n";
  }
  out.close();
  EXPECT_THROW(load_landmark_csv(path), DataError);
}

TEST(LandmarkCsv, BadHeaderRejected) {
  testutil::TempDir dir("landmarks_hdr");
  const std::string path = dir.file("hdr.csv");
  std::ofstream out(path);
  out << "time,x,y\n0,0,0\n";
  out.close();
  EXPECT_THROW(load_landmark_csv(path), DataError);
}

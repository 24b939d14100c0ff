#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "tapnet/data.hpp"
#include "tapnet/errors.hpp"

namespace tapnet {

// 21-point hand landmark topology; indices follow the MediaPipe Hands layout.
inline constexpr std::size_t kHandLandmarks = 21;
inline constexpr std::size_t kWristIdx = 0;
inline constexpr std::size_t kThumbTipIdx = 4;
inline constexpr std::size_t kIndexTipIdx = 8;

struct LandmarkFrame {
  double t = 0.0;  // seconds
  std::array<std::array<double, 2>, kHandLandmarks> pts{};
  bool valid = false;
};

struct LandmarkSequence {
  std::vector<LandmarkFrame> frames;
};

// Landmark CSV: header `t,x0,y0,...,x20,y20,valid`, timestamps strictly
// increasing.
inline LandmarkSequence load_landmark_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open landmark CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header row");
  std::vector<std::string> header = detail::split_csv_line(line);
  const std::size_t expected_cols = 2 + 2 * kHandLandmarks;
  if (header.size() != expected_cols || detail::trim(header[0]) != "t" ||
      detail::trim(header.back()) != "valid") {
    throw DataError(path + ": expected header t,x0,y0,...,x20,y20,valid");
  }

  LandmarkSequence seq;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row_no;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != expected_cols) {
      throw DataError(path + ": row " + std::to_string(row_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(expected_cols));
    }
    LandmarkFrame frame;
    double flag = 0.0;
    if (!detail::parse_double(cells[0], frame.t) || !std::isfinite(frame.t)) {
      throw DataError(path + ": row " + std::to_string(row_no) + ": bad timestamp '" +
                      cells[0] + "'");
    }
    if (!detail::parse_double(cells.back(), flag) || (flag != 0.0 && flag != 1.0)) {
      throw DataError(path + ": row " + std::to_string(row_no) + ": valid flag must be 0 or 1");
    }
    frame.valid = flag == 1.0;
    for (std::size_t k = 0; k < kHandLandmarks; ++k) {
      double x = 0.0, y = 0.0;
      const bool ok = detail::parse_double(cells[1 + 2 * k], x) &&
                      detail::parse_double(cells[2 + 2 * k], y);
      if (frame.valid && (!ok || !std::isfinite(x) || !std::isfinite(y))) {
        throw DataError(path + ": row " + std::to_string(row_no) +
                        ": non-finite coordinates in a valid frame");
      }
      frame.pts[k] = {x, y};
    }
    if (!seq.frames.empty() && frame.t <= seq.frames.back().t) {
      throw DataError(path + ": row " + std::to_string(row_no) +
                      ": timestamps must be strictly increasing");
    }
    seq.frames.push_back(frame);
  }
  return seq;
}

// Thumb-index opening angle in degrees, one entry per source frame.
struct AngleSignal {
  std::vector<double> angles;
  std::vector<std::uint8_t> valid;
  double rate_hz = 0.0;
  std::size_t start_frame = 0;  // offset into the source sequence

  std::size_t size() const { return angles.size(); }
};

// Angle between the thumb and index rays out of the wrist. Frames whose rays
// degenerate (tip on the wrist) are marked invalid rather than fatal.
inline AngleSignal compute_angle_signal(const LandmarkSequence& seq) {
  std::size_t n_valid = 0;
  for (const auto& f : seq.frames) {
    if (f.valid) ++n_valid;
  }
  if (n_valid < 2) throw DataError("compute_angle_signal: fewer than 2 valid frames");

  AngleSignal sig;
  const std::size_t n = seq.frames.size();
  sig.angles.assign(n, 0.0);
  sig.valid.assign(n, 0);
  sig.rate_hz = static_cast<double>(n - 1) / (seq.frames.back().t - seq.frames.front().t);
  constexpr double rad_to_deg = 57.29577951308232;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = seq.frames[i];
    if (!f.valid) continue;
    const double tx = f.pts[kThumbTipIdx][0] - f.pts[kWristIdx][0];
    const double ty = f.pts[kThumbTipIdx][1] - f.pts[kWristIdx][1];
    const double ix = f.pts[kIndexTipIdx][0] - f.pts[kWristIdx][0];
    const double iy = f.pts[kIndexTipIdx][1] - f.pts[kWristIdx][1];
    const double tn = std::sqrt(tx * tx + ty * ty);
    const double in_ = std::sqrt(ix * ix + iy * iy);
    if (tn < 1e-12 || in_ < 1e-12) continue;  // degenerate ray
    const double c = std::clamp((tx * ix + ty * iy) / (tn * in_), -1.0, 1.0);
    sig.angles[i] = std::acos(c) * rad_to_deg;
    sig.valid[i] = 1;
  }
  return sig;
}

namespace detail {

struct Segment {
  std::size_t begin;
  std::size_t end;  // half-open
};

// Clean ranges after trimming invalid edges; interior invalid runs longer
// than max_gap split the signal.
inline std::vector<Segment> clean_segments(const std::vector<std::uint8_t>& valid,
                                           std::size_t max_gap) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (valid[i]) idx.push_back(i);
  }
  std::vector<Segment> out;
  if (idx.empty()) return out;
  std::size_t seg_begin = idx[0];
  std::size_t prev = idx[0];
  for (std::size_t k = 1; k < idx.size(); ++k) {
    const std::size_t gap = idx[k] - prev - 1;
    if (gap > max_gap) {
      out.push_back({seg_begin, prev + 1});
      seg_begin = idx[k];
    }
    prev = idx[k];
  }
  out.push_back({seg_begin, prev + 1});
  return out;
}

// Fill interior invalid entries of [begin, end) by linear interpolation
// between the valid neighbours. The range must start and end valid.
inline void fill_linear(std::vector<double>& vals, const std::vector<std::uint8_t>& valid,
                        std::size_t begin, std::size_t end) {
  std::size_t last_valid = begin;
  for (std::size_t i = begin + 1; i < end; ++i) {
    if (!valid[i]) continue;
    if (i > last_valid + 1) {
      const double lo = vals[last_valid];
      const double hi = vals[i];
      const double span = static_cast<double>(i - last_valid);
      for (std::size_t k = last_valid + 1; k < i; ++k) {
        vals[k] = lo + (hi - lo) * static_cast<double>(k - last_valid) / span;
      }
    }
    last_valid = i;
  }
}

}  // namespace detail

// Gaps of at most max_gap_frames are filled linearly; longer gaps split the
// signal into separate clean segments.
inline std::vector<AngleSignal> interpolate_gaps(const AngleSignal& sig,
                                                 std::size_t max_gap_frames) {
  auto segments = detail::clean_segments(sig.valid, max_gap_frames);
  if (segments.empty()) throw DataError("interpolate_gaps: no valid frames");
  std::vector<double> filled = sig.angles;
  std::vector<AngleSignal> out;
  for (const auto& seg : segments) {
    detail::fill_linear(filled, sig.valid, seg.begin, seg.end);
    AngleSignal s;
    s.angles.assign(filled.begin() + static_cast<std::ptrdiff_t>(seg.begin),
                    filled.begin() + static_cast<std::ptrdiff_t>(seg.end));
    s.valid.assign(s.angles.size(), 1);
    s.rate_hz = sig.rate_hz;
    s.start_frame = sig.start_frame + seg.begin;
    out.push_back(std::move(s));
  }
  return out;
}

// Tap cycle events over one clean segment.
struct TapEvents {
  std::vector<std::size_t> peaks;
  std::vector<std::size_t> valleys;
  std::vector<double> amplitudes;  // degrees, one per peak
  std::vector<double> periods;     // seconds, between consecutive peaks
};

// Local-extrema scan with prominence >= 20% of the segment range and minimum
// peak spacing of 0.1 s. Alternation is enforced by dropping the lesser of
// two same-type extrema whenever pruning creates one.
inline TapEvents detect_taps(const AngleSignal& sig) {
  if (sig.rate_hz <= 0.0) throw ParameterError("detect_taps: sampling rate must be > 0");
  for (auto v : sig.valid) {
    if (!v) throw ParameterError("detect_taps: signal must be interpolated first");
  }
  const std::size_t n = sig.size();
  if (static_cast<double>(n) < sig.rate_hz) {
    throw DataError("detect_taps: segment shorter than 1 second");
  }

  // Collapse plateaus, then read turning points off the compressed series.
  std::vector<std::size_t> cidx;
  std::vector<double> cval;
  for (std::size_t i = 0; i < n; ++i) {
    if (cval.empty() || sig.angles[i] != cval.back()) {
      cidx.push_back(i);
      cval.push_back(sig.angles[i]);
    }
  }
  struct Extremum {
    std::size_t idx;
    double value;
    bool is_peak;
  };
  std::vector<Extremum> ext;
  for (std::size_t k = 1; k + 1 < cval.size(); ++k) {
    if (cval[k] > cval[k - 1] && cval[k] > cval[k + 1]) {
      ext.push_back({cidx[k], cval[k], true});
    } else if (cval[k] < cval[k - 1] && cval[k] < cval[k + 1]) {
      ext.push_back({cidx[k], cval[k], false});
    }
  }

  const auto [mn_it, mx_it] = std::minmax_element(sig.angles.begin(), sig.angles.end());
  const double prominence = 0.2 * (*mx_it - *mn_it);
  const double min_gap = 0.1 * sig.rate_hz;  // frames

  // Remove the shallowest adjacent peak/valley pair until every neighbouring
  // contrast clears the prominence threshold.
  while (ext.size() >= 2) {
    std::size_t best = 0;
    double best_contrast = std::abs(ext[0].value - ext[1].value);
    for (std::size_t k = 1; k + 1 < ext.size(); ++k) {
      const double c = std::abs(ext[k].value - ext[k + 1].value);
      if (c < best_contrast) {
        best_contrast = c;
        best = k;
      }
    }
    if (best_contrast >= prominence) break;
    ext.erase(ext.begin() + static_cast<std::ptrdiff_t>(best),
              ext.begin() + static_cast<std::ptrdiff_t>(best) + 2);
  }

  // Enforce minimum peak spacing: drop the lower of two close peaks together
  // with the valley between them.
  bool changed = true;
  while (changed) {
    changed = false;
    std::size_t prev_peak = ext.size();
    for (std::size_t k = 0; k < ext.size(); ++k) {
      if (!ext[k].is_peak) continue;
      if (prev_peak != ext.size() &&
          static_cast<double>(ext[k].idx - ext[prev_peak].idx) < min_gap) {
        const std::size_t drop = ext[k].value < ext[prev_peak].value ? k : prev_peak;
        const std::size_t other = drop == k ? prev_peak : k;
        // Remove the dropped peak and the adjacent valley toward the kept one.
        std::size_t valley = drop < other ? drop + 1 : drop - 1;
        const std::size_t lo = std::min(drop, valley);
        ext.erase(ext.begin() + static_cast<std::ptrdiff_t>(lo),
                  ext.begin() + static_cast<std::ptrdiff_t>(lo) + 2);
        changed = true;
        break;
      }
      prev_peak = k;
    }
  }

  TapEvents events;
  for (const auto& e : ext) {
    if (e.is_peak) {
      events.peaks.push_back(e.idx);
    } else {
      events.valleys.push_back(e.idx);
    }
  }
  if (events.peaks.size() < 2) throw DataError("detect_taps: insufficient taps");

  for (std::size_t k = 0; k + 1 < events.peaks.size(); ++k) {
    events.periods.push_back(static_cast<double>(events.peaks[k + 1] - events.peaks[k]) /
                             sig.rate_hz);
  }
  // Amplitude: peak minus the adjacent valley (preceding when available).
  for (std::size_t k = 0; k < ext.size(); ++k) {
    if (!ext[k].is_peak) continue;
    double valley_v;
    if (k > 0 && !ext[k - 1].is_peak) {
      valley_v = ext[k - 1].value;
    } else if (k + 1 < ext.size() && !ext[k + 1].is_peak) {
      valley_v = ext[k + 1].value;
    } else {
      valley_v = *mn_it;
    }
    events.amplitudes.push_back(ext[k].value - valley_v);
  }
  return events;
}

// ---------------------------------------------------------------------------
// Summary statistics and the feature vector
// ---------------------------------------------------------------------------

inline constexpr std::size_t kStatsPerFamily = 8;
inline constexpr std::size_t kFeatureFamilies = 6;
inline constexpr std::size_t kDefaultFeatureWidth = 57;

// {mean, std, median, min, max, coefficient of variation, slope, IQR}.
inline std::array<double, kStatsPerFamily> summarize(const std::vector<double>& values,
                                                     const std::vector<double>& xs) {
  if (values.empty()) throw DataError("summarize: empty feature family");
  if (values.size() != xs.size()) throw ShapeError("summarize: values/xs length mismatch");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);

  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };

  double x_mean = 0.0;
  for (double x : xs) x_mean += x;
  x_mean /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sxx += (xs[i] - x_mean) * (xs[i] - x_mean);
    sxy += (xs[i] - x_mean) * (values[i] - mean);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  const double cv = sd / std::max(std::abs(mean), 1e-12);

  return {mean,          sd,  quantile(0.5), sorted.front(),
          sorted.back(), cv,  slope,         quantile(0.75) - quantile(0.25)};
}

// Families in slot order: angular speed, angular acceleration, tap frequency,
// tap period, tap amplitude, wrist displacement; each summarized by the 8
// statistics above. The final slot is the tap count; any slots between are
// zero padding. See docs/feature_schema.md for the exact layout.
inline std::vector<double> extract_features(
    const AngleSignal& sig, const std::vector<std::array<double, 2>>& wrist_track,
    const TapEvents& events, std::size_t width = kDefaultFeatureWidth) {
  if (width == 0) throw ParameterError("extract_features: width must be >= 1");
  if (wrist_track.size() != sig.size()) {
    throw ShapeError("extract_features: wrist track length " +
                     std::to_string(wrist_track.size()) + " does not match signal length " +
                     std::to_string(sig.size()));
  }
  if (events.peaks.size() < 2) throw DataError("extract_features: insufficient taps");
  const double rate = sig.rate_hz;
  const std::size_t n = sig.size();

  std::vector<double> speed, speed_x;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    speed.push_back(std::abs(sig.angles[i + 1] - sig.angles[i]) * rate);
    speed_x.push_back((static_cast<double>(i) + 0.5) / rate);
  }
  std::vector<double> accel, accel_x;
  for (std::size_t i = 0; i + 2 < n; ++i) {
    accel.push_back(std::abs(sig.angles[i + 2] - 2.0 * sig.angles[i + 1] + sig.angles[i]) *
                    rate * rate);
    accel_x.push_back(static_cast<double>(i + 1) / rate);
  }
  std::vector<double> freq, tap_x;
  for (std::size_t k = 0; k < events.periods.size(); ++k) {
    freq.push_back(1.0 / events.periods[k]);
    tap_x.push_back(static_cast<double>(events.peaks[k + 1]) / rate);
  }
  std::vector<double> peak_x;
  for (std::size_t p : events.peaks) peak_x.push_back(static_cast<double>(p) / rate);

  double wx_mean = 0.0, wy_mean = 0.0;
  for (const auto& w : wrist_track) {
    wx_mean += w[0];
    wy_mean += w[1];
  }
  wx_mean /= static_cast<double>(n);
  wy_mean /= static_cast<double>(n);
  std::vector<double> wrist_disp, wrist_x;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = wrist_track[i][0] - wx_mean;
    const double dy = wrist_track[i][1] - wy_mean;
    wrist_disp.push_back(std::sqrt(dx * dx + dy * dy));
    wrist_x.push_back(static_cast<double>(i) / rate);
  }

  std::vector<double> out;
  out.reserve(kFeatureFamilies * kStatsPerFamily + 1);
  for (const auto& stats : {summarize(speed, speed_x), summarize(accel, accel_x),
                            summarize(freq, tap_x), summarize(events.periods, tap_x),
                            summarize(events.amplitudes, peak_x),
                            summarize(wrist_disp, wrist_x)}) {
    out.insert(out.end(), stats.begin(), stats.end());
  }

  std::vector<double> row(width, 0.0);
  const std::size_t copy_n = std::min(out.size(), width - 1);
  std::copy(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(copy_n), row.begin());
  row[width - 1] = static_cast<double>(events.peaks.size());
  return row;
}

// Full pipeline for one recording: angle signal, gap handling, tap detection
// on the longest clean segment, then the summary features.
inline std::vector<double> extract_from_landmarks(const LandmarkSequence& seq,
                                                  std::size_t max_gap_frames = 3,
                                                  std::size_t width = kDefaultFeatureWidth) {
  AngleSignal sig = compute_angle_signal(seq);
  std::vector<AngleSignal> segments = interpolate_gaps(sig, max_gap_frames);
  std::size_t best = 0;
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].size() > segments[best].size()) best = i;
  }
  const AngleSignal& seg = segments[best];

  // Wrist coordinates for the same frames, gap-filled with the same rule.
  const std::size_t n = seq.frames.size();
  std::vector<double> wx(n, 0.0), wy(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    wx[i] = seq.frames[i].pts[kWristIdx][0];
    wy[i] = seq.frames[i].pts[kWristIdx][1];
  }
  detail::fill_linear(wx, sig.valid, seg.start_frame, seg.start_frame + seg.size());
  detail::fill_linear(wy, sig.valid, seg.start_frame, seg.start_frame + seg.size());
  std::vector<std::array<double, 2>> wrist(seg.size());
  for (std::size_t i = 0; i < seg.size(); ++i) {
    wrist[i] = {wx[seg.start_frame + i], wy[seg.start_frame + i]};
  }

  TapEvents events = detect_taps(seg);
  return extract_features(seg, wrist, events, width);
}

}  // namespace tapnet

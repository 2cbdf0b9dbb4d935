// Copyright 2026 The emotts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// STFT magnitudes, HTK log-mel features and Griffin-Lim inversion.
//
// Framing has no centre padding: frame t covers samples
// [t * hop, t * hop + frame_length), windowed with a periodic Hann window
// and zero-padded to fft_size. The inverse overlap-adds windowed frames and
// divides by the summed squared window (least-squares ISTFT), giving
// (frames - 1) * hop + frame_length samples.

#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "emotts/common.hpp"
#include "emotts/rng.hpp"

namespace emotts::dsp {

struct FrameConfig {
  int sample_rate = 16000;
  int frame_length = 800;  // 50 ms
  int hop_length = 200;    // 12.5 ms
  int fft_size = 1024;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;

  int bins() const { return fft_size / 2 + 1; }

  void Validate() const {
    Require(sample_rate > 0, "frame config: sample_rate must be positive");
    Require(hop_length >= 1 && hop_length <= frame_length,
            "frame config: need 1 <= hop_length <= frame_length");
    Require(frame_length <= fft_size, "frame config: need frame_length <= fft_size");
    Require(fft_size % 2 == 0, "frame config: fft_size must be even");
    Require(n_mels >= 1, "frame config: n_mels must be >= 1");
    Require(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0,
            "frame config: need 0 <= fmin < fmax <= sample_rate / 2");
    Require(log_floor > 0.0, "frame config: log_floor must be positive");
  }

  uint64_t Hash() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d/%d/%d/%d/%d/%.17g/%.17g/%.17g", sample_rate, frame_length,
                  hop_length, fft_size, n_mels, fmin, fmax, log_floor);
    return Fnv1a64(buf);
  }

  bool operator==(const FrameConfig&) const = default;
};

struct LinearSpectrogram {
  Mat mag;  // frames x bins
  Eigen::Index frames() const { return mag.rows(); }
};

struct MelSpectrogram {
  Mat values;  // frames x n_mels, natural-log magnitudes
  FrameConfig cfg;
  Eigen::Index frames() const { return values.rows(); }
};

using Complex = std::complex<double>;
using ComplexFrames = std::vector<std::vector<Complex>>;

inline int NumFrames(size_t samples, const FrameConfig& cfg) {
  if (samples < static_cast<size_t>(cfg.frame_length)) return 0;
  return 1 + static_cast<int>((samples - cfg.frame_length) / cfg.hop_length);
}

inline size_t OverlapAddLength(int frames, const FrameConfig& cfg) {
  if (frames <= 0) return 0;
  return static_cast<size_t>(frames - 1) * cfg.hop_length + cfg.frame_length;
}

inline std::vector<double> HannWindow(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

inline ComplexFrames Stft(const std::vector<double>& x, const FrameConfig& cfg) {
  const int frames = NumFrames(x.size(), cfg);
  const auto window = HannWindow(cfg.frame_length);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  ComplexFrames out(frames);
  std::vector<double> buf(cfg.fft_size);
  for (int t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const size_t off = static_cast<size_t>(t) * cfg.hop_length;
    for (int i = 0; i < cfg.frame_length; ++i) buf[i] = x[off + i] * window[i];
    fft.fwd(out[t], buf);
    out[t].resize(cfg.bins());
  }
  return out;
}

inline std::vector<double> Istft(const ComplexFrames& spec, const FrameConfig& cfg) {
  const int frames = static_cast<int>(spec.size());
  std::vector<double> out(OverlapAddLength(frames, cfg), 0.0);
  std::vector<double> norm(out.size(), 0.0);
  const auto window = HannWindow(cfg.frame_length);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf;
  for (int t = 0; t < frames; ++t) {
    fft.inv(buf, spec[t], cfg.fft_size);
    const size_t off = static_cast<size_t>(t) * cfg.hop_length;
    for (int i = 0; i < cfg.frame_length; ++i) {
      out[off + i] += buf[i] * window[i];
      norm[off + i] += window[i] * window[i];
    }
  }
  if (out.empty()) return out;
  // Floor the window normalizer so the tapered edges are not amplified.
  const double floor = 0.05 * *std::max_element(norm.begin(), norm.end());
  for (size_t i = 0; i < out.size(); ++i)
    if (norm[i] > 0.0) out[i] /= std::max(norm[i], floor);
  return out;
}

inline LinearSpectrogram StftMagnitude(const std::vector<double>& waveform, const FrameConfig& cfg) {
  cfg.Validate();
  if (waveform.size() < static_cast<size_t>(cfg.frame_length))
    throw ValidationError("stft: waveform has " + std::to_string(waveform.size()) +
                          " samples, fewer than frame_length " +
                          std::to_string(cfg.frame_length));
  const auto spec = Stft(waveform, cfg);
  LinearSpectrogram out;
  out.mag.resize(static_cast<Eigen::Index>(spec.size()), cfg.bins());
  for (size_t t = 0; t < spec.size(); ++t)
    for (int k = 0; k < cfg.bins(); ++k) out.mag(t, k) = std::abs(spec[t][k]);
  return out;
}

inline double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// n_mels x bins. Triangles on the HTK mel scale, evaluated at the bin
/// centre frequencies, each row normalised to sum to one.
inline Mat MelFilterbank(const FrameConfig& cfg) {
  cfg.Validate();
  const int bins = cfg.bins();
  const double lo = HzToMel(cfg.fmin), hi = HzToMel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = MelToHz(lo + (hi - lo) * i / (cfg.n_mels + 1));
  Mat fb = Mat::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.fft_size;
      const double up = (f - left) / (centre - left);
      const double down = (right - f) / (right - centre);
      fb(m, k) = std::max(0.0, std::min(up, down));
    }
    const double s = fb.row(m).sum();
    if (s > 0.0) {
      fb.row(m) /= s;
    } else {
      // Band narrower than a bin: use the nearest bin.
      const int k = static_cast<int>(std::lround(centre * cfg.fft_size / cfg.sample_rate));
      fb(m, std::clamp(k, 0, bins - 1)) = 1.0;
    }
  }
  return fb;
}

inline MelSpectrogram LogMel(const LinearSpectrogram& linear, const FrameConfig& cfg) {
  if (linear.mag.cols() != cfg.bins())
    throw ValidationError("log_mel: spectrogram has " + std::to_string(linear.mag.cols()) +
                          " bins but config expects " + std::to_string(cfg.bins()));
  const Mat fb = MelFilterbank(cfg);
  MelSpectrogram out;
  out.cfg = cfg;
  out.values = (linear.mag * fb.transpose()).cwiseMax(cfg.log_floor).array().log().matrix();
  return out;
}

inline MelSpectrogram WaveformToLogMel(const std::vector<double>& wav, const FrameConfig& cfg) {
  return LogMel(StftMagnitude(wav, cfg), cfg);
}

/// Frobenius distance between |STFT(x)| and a target magnitude; frames
/// beyond the shorter of the two are ignored.
inline double SpectralDistance(const std::vector<double>& x, const LinearSpectrogram& target,
                               const FrameConfig& cfg) {
  const auto got = StftMagnitude(x, cfg);
  const Eigen::Index f = std::min(got.frames(), target.frames());
  return (got.mag.topRows(f) - target.mag.topRows(f)).norm();
}

/// Griffin-Lim phase reconstruction from zero initial phase. Zero
/// magnitudes give silence; n_iters == 0 returns the zero-phase inverse.
inline std::vector<double> GriffinLim(const LinearSpectrogram& mag, int n_iters,
                                      const FrameConfig& cfg) {
  cfg.Validate();
  Require(n_iters >= 0, "griffin_lim: n_iters must be >= 0");
  Require(mag.mag.cols() == cfg.bins(), "griffin_lim: bin count does not match config");
  const int frames = static_cast<int>(mag.frames());
  ComplexFrames spec(frames, std::vector<Complex>(cfg.bins()));
  for (int t = 0; t < frames; ++t)
    for (int k = 0; k < cfg.bins(); ++k) spec[t][k] = Complex(std::max(0.0, mag.mag(t, k)), 0.0);
  if (frames == 0) return {};
  for (int it = 0; it < n_iters; ++it) {
    const auto x = Istft(spec, cfg);
    const auto est = Stft(x, cfg);
    for (int t = 0; t < frames; ++t)
      for (int k = 0; k < cfg.bins(); ++k) {
        const double a = std::abs(est[t][k]);
        const Complex phase = a > 1e-12 ? est[t][k] / a : Complex(1.0, 0.0);
        spec[t][k] = std::max(0.0, mag.mag(t, k)) * phase;
      }
  }
  auto out = Istft(spec, cfg);
  for (double& s : out)
    if (!std::isfinite(s)) s = 0.0;
  return out;
}

}  // namespace emotts::dsp

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nq/common.hpp"

namespace nq {

// Raw multichannel EEG segment plus routing metadata.
struct EegRecording {
  double sample_rate = 0.0;
  std::vector<std::vector<double>> samples;  // channels x time
  std::string dataset_id;
  std::string label;
  std::string subject_id;
  std::string session_id;

  std::size_t channels() const { return samples.size(); }
  std::size_t length() const { return samples.empty() ? 0 : samples[0].size(); }
  void validate() const;
};

struct PreprocessSpec {
  double band_low = 0.1;
  double band_high = 75.0;
  enum class LineFreq { kAuto, k50, k60, kOff };
  LineFreq line = LineFreq::kAuto;
  double target_rate = 200.0;
  enum class Norm { kZscore, kPct95 };
  Norm norm = Norm::kZscore;
};

// Non-overlapping temporal patches, the encoder's input layout.
struct PatchGrid {
  std::size_t channels = 0;
  std::size_t patches = 0;    // T = floor(S / patch_len)
  std::size_t patch_len = 0;  // t
  std::vector<double> data;   // row-major (channel, patch, offset)

  double at(std::size_t c, std::size_t tau, std::size_t i) const {
    return data[(c * patches + tau) * patch_len + i];
  }
};

// ---------------------------------------------------------------------------
// Preprocessing chain. Every op preserves channel count, rate (except
// resample), and metadata. Spectral edits use an FFT mask with a 1 Hz
// raised-cosine transition centered on each edge; attenuation beyond the
// transition band is >= 20 dB. The DC bin is removed whenever band_low > 0.

EegRecording bandpass(const EegRecording& rec, double low, double high);

struct LineNoiseScan {
  std::optional<double> freq;  // 50 or 60 when detected
  bool limited_range = false;  // rate too low to observe 60 Hz; tested 50 only
  double ratio50 = 0.0;        // peak-to-band-median ratios, for diagnostics
  double ratio60 = 0.0;
};
/// Flags a power-line frequency when its +-1 Hz mean magnitude exceeds 5x the
/// median of the 20-90 Hz band, averaged across channels. Needs >= 2 s of data.
LineNoiseScan detect_line_noise(const EegRecording& rec);

EegRecording notch(const EegRecording& rec, double freq);

/// FFT resampling to round(S * target / rate) points.
EegRecording resample(const EegRecording& rec, double target_rate);

/// zscore: per-channel mean 0 / std 1 (population); channels with std < 1e-9
/// become zeros. pct95: division by the per-channel 95th percentile of |x|
/// (linear interpolation); degenerate percentiles < 1e-12 also yield zeros.
EegRecording normalize(const EegRecording& rec, PreprocessSpec::Norm mode);

PatchGrid patch(const EegRecording& rec, std::size_t patch_len);

/// bandpass -> notch (detected or forced) -> resample -> normalize.
EegRecording preprocess(const EegRecording& rec, const PreprocessSpec& spec);

// ---------------------------------------------------------------------------
// Synthetic multi-task generator. Each family owns a disjoint channel subset
// and a base rhythm; class k adds k * offset Hz. Two tasks of one family share
// channels (and label strings), differing by a per-task frequency shift.

enum class SynthFamily { kAlpha, kBeta };

struct SynthSpec {
  SynthFamily family = SynthFamily::kAlpha;
  std::string task_id;
  std::size_t n_classes = 2;
  std::size_t channels = 4;
  std::size_t samples = 400;  // S
  double rate = 200.0;
  std::size_t n_samples = 100;
  std::uint64_t seed = 1;
  double amplitude = 2.0;
  double noise_std = 1.0;
  double freq_shift = 0.0;   // per-task detuning within the family
  double phase_jitter = 0.0; // radians, uniform; 0 keeps phases aligned
  std::size_t n_subjects = 10;
  std::size_t n_sessions = 2;
};

std::vector<EegRecording> synth_task(const SynthSpec& spec);
std::vector<std::size_t> synth_family_channels(SynthFamily family);
double synth_class_freq(SynthFamily family, std::size_t k, double freq_shift = 0.0);
std::string synth_label(SynthFamily family, std::size_t k);

// ---------------------------------------------------------------------------
// Split planning

struct SplitPlan {
  enum class Strategy { kBySubjectRatio, kByTrialChrono, kBySessionRatio, kRandomRatio };
  Strategy strategy = Strategy::kRandomRatio;
  double train = 0.8, val = 0.1, test = 0.1;
  std::uint64_t seed = 1;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

SplitIndices plan_splits(const std::vector<EegRecording>& samples, const SplitPlan& plan);

// ---------------------------------------------------------------------------
// Storage: .eegb binary container and CSV import with JSON sidecar metadata.

void save_eegb(const EegRecording& rec, const std::string& path);
EegRecording load_eegb(const std::string& path);

/// CSV rows: channel index, then samples. Metadata comes from a sidecar JSON
/// file (same path, .json extension) with {rate, label, dataset_id, subject_id}.
EegRecording load_csv(const std::string& csv_path);

}  // namespace nq

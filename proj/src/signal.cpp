// SPDX-License-Identifier: Apache-2.0
#include "nq/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "nq/fft.hpp"
#include "nq/rng.hpp"

namespace nq {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Raised-cosine step: 0 below lo, 1 above hi.
double ramp_up(double f, double lo, double hi) {
  if (f <= lo) return 0.0;
  if (f >= hi) return 1.0;
  return 0.5 * (1.0 - std::cos(kPi * (f - lo) / (hi - lo)));
}

EegRecording with_samples(const EegRecording& rec, std::vector<std::vector<double>> samples) {
  EegRecording out = rec;
  out.samples = std::move(samples);
  return out;
}

EegRecording apply_mask(const EegRecording& rec,
                        const std::function<double(double)>& gain) {
  const std::size_t s = rec.length();
  std::vector<std::vector<double>> out(rec.channels());
  for (std::size_t c = 0; c < rec.channels(); ++c) {
    auto spec = fft::rfft(rec.samples[c]);
    for (std::size_t k = 0; k < spec.size(); ++k)
      spec[k] *= gain(fft::bin_freq(k, s, rec.sample_rate));
    out[c] = fft::irfft(spec, s);
  }
  return with_samples(rec, std::move(out));
}

double percentile_abs(const std::vector<double>& x, double q) {
  std::vector<double> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = std::abs(x[i]);
  std::sort(a.begin(), a.end());
  if (a.size() == 1) return a[0];
  const double rank = q * static_cast<double>(a.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(rank);
  const double frac = rank - static_cast<double>(lo);
  if (lo + 1 >= a.size()) return a.back();
  return a[lo] * (1.0 - frac) + a[lo + 1] * frac;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("eegb: truncated file");
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("eegb: truncated file");
  return v;
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("eegb: truncated file");
  return v;
}
std::string read_str(std::istream& is) {
  std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw IoError("eegb: truncated file");
  return s;
}

}  // namespace

void EegRecording::validate() const {
  if (sample_rate <= 0.0) throw ConfigError("EegRecording: sample_rate must be positive");
  if (samples.empty()) throw ConfigError("EegRecording: no channels");
  const std::size_t s = samples[0].size();
  for (const auto& row : samples)
    if (row.size() != s) throw ConfigError("EegRecording: channels have unequal lengths");
}

EegRecording bandpass(const EegRecording& rec, double low, double high) {
  rec.validate();
  if (!(0.0 < low && low < high && high < rec.sample_rate / 2.0))
    throw ConfigError("bandpass: need 0 < low < high < rate/2, got [" + std::to_string(low) +
                      ", " + std::to_string(high) + ") at rate " +
                      std::to_string(rec.sample_rate));
  auto gain = [low, high](double f) {
    if (f == 0.0) return 0.0;  // drop DC: the band excludes it whenever low > 0
    double hp = ramp_up(f, low - 0.5, low + 0.5);
    double lp = 1.0 - ramp_up(f, high - 0.5, high + 0.5);
    return hp * lp;
  };
  return apply_mask(rec, gain);
}

LineNoiseScan detect_line_noise(const EegRecording& rec) {
  rec.validate();
  const std::size_t s = rec.length();
  if (static_cast<double>(s) < 2.0 * rec.sample_rate)
    throw ConfigError("detect_line_noise: need at least 2 seconds of samples");

  // Mean magnitude spectrum across channels.
  std::vector<double> mean_mag;
  for (std::size_t c = 0; c < rec.channels(); ++c) {
    auto mag = fft::magnitude(rec.samples[c]);
    if (mean_mag.empty()) mean_mag.assign(mag.size(), 0.0);
    for (std::size_t k = 0; k < mag.size(); ++k) mean_mag[k] += mag[k] / rec.channels();
  }

  const double nyquist = rec.sample_rate / 2.0;
  auto band_mean = [&](double lo, double hi) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < mean_mag.size(); ++k) {
      double f = fft::bin_freq(k, s, rec.sample_rate);
      if (f >= lo && f <= hi) {
        acc += mean_mag[k];
        ++n;
      }
    }
    return n ? acc / static_cast<double>(n) : 0.0;
  };
  std::vector<double> band;
  for (std::size_t k = 0; k < mean_mag.size(); ++k) {
    double f = fft::bin_freq(k, s, rec.sample_rate);
    if (f >= 20.0 && f <= std::min(90.0, nyquist)) band.push_back(mean_mag[k]);
  }
  double median = 0.0;
  if (!band.empty()) {
    std::sort(band.begin(), band.end());
    median = band.size() % 2 ? band[band.size() / 2]
                             : 0.5 * (band[band.size() / 2 - 1] + band[band.size() / 2]);
  }
  if (median <= 0.0) median = 1e-300;  // all-zero signal: ratios stay finite

  LineNoiseScan scan;
  scan.limited_range = rec.sample_rate < 130.0;
  scan.ratio50 = nyquist >= 50.0 ? band_mean(49.0, 51.0) / median : 0.0;
  scan.ratio60 = (!scan.limited_range && nyquist > 61.0) ? band_mean(59.0, 61.0) / median : 0.0;
  const double best = std::max(scan.ratio50, scan.ratio60);
  if (best > 5.0) scan.freq = scan.ratio50 >= scan.ratio60 ? 50.0 : 60.0;
  return scan;
}

EegRecording notch(const EegRecording& rec, double freq) {
  rec.validate();
  if (!(freq > 0.0 && freq < rec.sample_rate / 2.0))
    throw ConfigError("notch: frequency " + std::to_string(freq) + " not below Nyquist of rate " +
                      std::to_string(rec.sample_rate));
  auto gain = [freq](double f) {
    double inside = ramp_up(f, freq - 1.0, freq - 0.5) * (1.0 - ramp_up(f, freq + 0.5, freq + 1.0));
    return 1.0 - inside;
  };
  return apply_mask(rec, gain);
}

EegRecording resample(const EegRecording& rec, double target_rate) {
  rec.validate();
  if (target_rate <= 0.0) throw ConfigError("resample: target rate must be positive");
  if (target_rate == rec.sample_rate) return rec;

  const std::size_t s = rec.length();
  const auto s2 =
      static_cast<std::size_t>(std::llround(static_cast<double>(s) * target_rate / rec.sample_rate));
  if (s2 == 0) throw ConfigError("resample: output would be empty");

  const double scale = static_cast<double>(s2) / static_cast<double>(s);
  std::vector<std::vector<double>> out(rec.channels());
  for (std::size_t c = 0; c < rec.channels(); ++c) {
    auto spec = fft::rfft(rec.samples[c]);
    std::vector<std::complex<double>> spec2(s2 / 2 + 1, {0.0, 0.0});
    const std::size_t keep = std::min(spec.size(), spec2.size());
    for (std::size_t k = 0; k < keep; ++k) spec2[k] = spec[k] * scale;
    if (s % 2 == 0 && spec.size() - 1 < spec2.size() - 1) {
      // Old Nyquist bin becomes an interior bin; split it with its mirror.
      spec2[spec.size() - 1] *= 0.5;
    }
    if (s2 % 2 == 0) spec2.back() = {spec2.back().real(), 0.0};
    out[c] = fft::irfft(spec2, s2);
  }
  EegRecording res = with_samples(rec, std::move(out));
  res.sample_rate = target_rate;
  return res;
}

EegRecording normalize(const EegRecording& rec, PreprocessSpec::Norm mode) {
  rec.validate();
  std::vector<std::vector<double>> out(rec.channels());
  for (std::size_t c = 0; c < rec.channels(); ++c) {
    const auto& x = rec.samples[c];
    auto& y = out[c];
    y.resize(x.size());
    if (mode == PreprocessSpec::Norm::kZscore) {
      double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
      double var = 0.0;
      for (double v : x) var += (v - mean) * (v - mean);
      var /= static_cast<double>(x.size());
      double sd = std::sqrt(var);
      if (sd < 1e-9) {
        std::fill(y.begin(), y.end(), 0.0);
      } else {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / sd;
      }
    } else {
      double p95 = percentile_abs(x, 0.95);
      if (p95 < 1e-12) {
        std::fill(y.begin(), y.end(), 0.0);
      } else {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / p95;
      }
    }
  }
  return with_samples(rec, std::move(out));
}

PatchGrid patch(const EegRecording& rec, std::size_t patch_len) {
  rec.validate();
  if (patch_len == 0) throw ConfigError("patch: window length must be >= 1");
  const std::size_t s = rec.length();
  if (s < patch_len)
    throw ConfigError("patch: recording of " + std::to_string(s) +
                      " samples shorter than window " + std::to_string(patch_len) +
                      ", no patches");
  PatchGrid grid;
  grid.channels = rec.channels();
  grid.patches = s / patch_len;
  grid.patch_len = patch_len;
  grid.data.resize(grid.channels * grid.patches * patch_len);
  for (std::size_t c = 0; c < grid.channels; ++c)
    for (std::size_t tau = 0; tau < grid.patches; ++tau)
      for (std::size_t i = 0; i < patch_len; ++i)
        grid.data[(c * grid.patches + tau) * patch_len + i] = rec.samples[c][tau * patch_len + i];
  return grid;
}

EegRecording preprocess(const EegRecording& rec, const PreprocessSpec& spec) {
  if (!(0.0 < spec.band_low && spec.band_low < spec.band_high &&
        spec.band_high < spec.target_rate / 2.0))
    throw ConfigError("preprocess: need 0 < band_low < band_high < target_rate/2");
  EegRecording cur = bandpass(rec, spec.band_low, spec.band_high);
  switch (spec.line) {
    case PreprocessSpec::LineFreq::kAuto: {
      auto scan = detect_line_noise(cur);
      if (scan.freq) cur = notch(cur, *scan.freq);
      break;
    }
    case PreprocessSpec::LineFreq::k50:
      cur = notch(cur, 50.0);
      break;
    case PreprocessSpec::LineFreq::k60:
      cur = notch(cur, 60.0);
      break;
    case PreprocessSpec::LineFreq::kOff:
      break;
  }
  cur = resample(cur, spec.target_rate);
  return normalize(cur, spec.norm);
}

// ---------------------------------------------------------------------------
// Synthetic generator

std::vector<std::size_t> synth_family_channels(SynthFamily family) {
  return family == SynthFamily::kAlpha ? std::vector<std::size_t>{0, 1}
                                       : std::vector<std::size_t>{2, 3};
}

double synth_class_freq(SynthFamily family, std::size_t k, double freq_shift) {
  const double base = family == SynthFamily::kAlpha ? 8.0 : 16.0;
  const double offset = family == SynthFamily::kAlpha ? 4.0 : 5.0;
  return base + offset * static_cast<double>(k) + freq_shift;
}

std::string synth_label(SynthFamily family, std::size_t k) {
  static const std::vector<std::string> alpha = {"left", "right", "both", "rest"};
  static const std::vector<std::string> beta = {"high", "low", "medium", "idle"};
  const auto& names = family == SynthFamily::kAlpha ? alpha : beta;
  if (k < names.size()) return names[k];
  return std::string(family == SynthFamily::kAlpha ? "alpha" : "beta") + std::to_string(k);
}

std::vector<EegRecording> synth_task(const SynthSpec& spec) {
  if (spec.n_classes < 2) throw ConfigError("synth_task: need at least 2 classes");
  const auto active = synth_family_channels(spec.family);
  for (auto c : active)
    if (c >= spec.channels)
      throw ConfigError("synth_task: channel count too small for the family's subset");

  Rng rng(spec.seed);
  std::vector<EegRecording> out;
  out.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const std::size_t k = i % spec.n_classes;
    const double freq = synth_class_freq(spec.family, k, spec.freq_shift);
    const double phase = spec.phase_jitter > 0.0 ? rng.uniform(-1.0, 1.0) * spec.phase_jitter : 0.0;

    EegRecording rec;
    rec.sample_rate = spec.rate;
    rec.dataset_id = spec.task_id;
    rec.label = synth_label(spec.family, k);
    rec.subject_id = spec.task_id + "-s" + std::to_string(i % spec.n_subjects);
    rec.session_id = "sess" + std::to_string((i / spec.n_subjects) % spec.n_sessions);
    rec.samples.assign(spec.channels, std::vector<double>(spec.samples, 0.0));
    for (std::size_t c = 0; c < spec.channels; ++c) {
      const bool is_active = std::find(active.begin(), active.end(), c) != active.end();
      for (std::size_t t = 0; t < spec.samples; ++t) {
        double v = rng.gaussian() * spec.noise_std;
        if (is_active)
          v += spec.amplitude * std::sin(2.0 * kPi * freq * static_cast<double>(t) / spec.rate + phase);
        rec.samples[c][t] = v;
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split planning

SplitIndices plan_splits(const std::vector<EegRecording>& samples, const SplitPlan& plan) {
  if (samples.empty()) throw ConfigError("plan_splits: no samples");
  const double sum = plan.train + plan.val + plan.test;
  if (std::abs(sum - 1.0) > 1e-9 || plan.train < 0 || plan.val < 0 || plan.test < 0)
    throw ConfigError("plan_splits: ratios must be nonnegative and sum to 1");

  // Build groups: key -> sample indices, ordered by first appearance.
  std::vector<std::vector<std::size_t>> groups;
  using Strategy = SplitPlan::Strategy;
  if (plan.strategy == Strategy::kRandomRatio || plan.strategy == Strategy::kByTrialChrono) {
    groups.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) groups.push_back({i});
  } else {
    std::map<std::string, std::size_t> by_key;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::string key = plan.strategy == Strategy::kBySubjectRatio
                            ? samples[i].subject_id
                            : samples[i].subject_id + "/" + samples[i].session_id;
      auto it = by_key.find(key);
      if (it == by_key.end()) {
        by_key.emplace(key, groups.size());
        groups.push_back({i});
      } else {
        groups[it->second].push_back(i);
      }
    }
  }

  const double ratios[3] = {plan.train, plan.val, plan.test};
  std::size_t n_nonzero = 0;
  for (double r : ratios)
    if (r > 0.0) ++n_nonzero;
  if (groups.size() < n_nonzero)
    throw ConfigError("plan_splits: " + std::to_string(groups.size()) +
                      " groups cannot fill " + std::to_string(n_nonzero) + " splits");

  // Largest-remainder allocation of group counts.
  const auto g = static_cast<double>(groups.size());
  std::size_t counts[3];
  double fracs[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double want = ratios[i] * g;
    counts[i] = static_cast<std::size_t>(want);
    fracs[i] = want - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < groups.size()) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (fracs[i] > fracs[best]) best = i;
    ++counts[best];
    fracs[best] = -1.0;
    ++assigned;
  }
  // Every nonzero-ratio split gets at least one group.
  for (int i = 0; i < 3; ++i) {
    if (ratios[i] > 0.0 && counts[i] == 0) {
      int donor = 0;
      for (int j = 1; j < 3; ++j)
        if (counts[j] > counts[donor]) donor = j;
      --counts[donor];
      ++counts[i];
    }
  }

  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (plan.strategy != Strategy::kByTrialChrono) {
    Rng rng(plan.seed);
    order = rng.permutation(groups.size());
  }

  SplitIndices idx;
  std::size_t pos = 0;
  std::vector<std::size_t>* dest[3] = {&idx.train, &idx.val, &idx.test};
  for (int part = 0; part < 3; ++part) {
    for (std::size_t n = 0; n < counts[part]; ++n, ++pos)
      for (auto s : groups[order[pos]]) dest[part]->push_back(s);
  }
  for (auto* d : dest) std::sort(d->begin(), d->end());
  return idx;
}

// ---------------------------------------------------------------------------
// Storage

void save_eegb(const EegRecording& rec, const std::string& path) {
  rec.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_eegb: cannot open " + path);
  os.write("EEGB", 4);
  write_u32(os, 1);  // version
  write_u32(os, static_cast<std::uint32_t>(rec.channels()));
  write_u64(os, rec.length());
  write_f64(os, rec.sample_rate);
  write_str(os, rec.label);
  write_str(os, rec.dataset_id);
  write_str(os, rec.subject_id);
  write_str(os, rec.session_id);
  for (const auto& row : rec.samples)
    for (double v : row) {
      auto f = static_cast<float>(v);
      os.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  if (!os) throw IoError("save_eegb: write failed for " + path);
}

EegRecording load_eegb(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_eegb: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "EEGB", 4) != 0)
    throw IoError("load_eegb: " + path + " is not an eegb container");
  const std::uint32_t version = read_u32(is);
  if (version != 1)
    throw IoError("load_eegb: unsupported version " + std::to_string(version));
  EegRecording rec;
  const std::uint32_t c = read_u32(is);
  const std::uint64_t s = read_u64(is);
  rec.sample_rate = read_f64(is);
  rec.label = read_str(is);
  rec.dataset_id = read_str(is);
  rec.subject_id = read_str(is);
  rec.session_id = read_str(is);
  rec.samples.assign(c, std::vector<double>(s));
  for (auto& row : rec.samples)
    for (auto& v : row) {
      float f = 0;
      is.read(reinterpret_cast<char*>(&f), sizeof f);
      if (!is) throw IoError("load_eegb: truncated payload in " + path);
      v = f;
    }
  return rec;
}

EegRecording load_csv(const std::string& csv_path) {
  std::ifstream is(csv_path);
  if (!is) throw IoError("load_csv: cannot open " + csv_path);

  std::map<long, std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ','))
      throw IoError("load_csv: line " + std::to_string(line_no) + ": missing channel index");
    long ch;
    try {
      ch = std::stol(cell);
    } catch (const std::exception&) {
      throw IoError("load_csv: line " + std::to_string(line_no) + ": bad channel index '" +
                    cell + "'");
    }
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("load_csv: line " + std::to_string(line_no) + ": bad sample '" + cell +
                      "'");
      }
    }
    rows[ch] = std::move(vals);
  }
  if (rows.empty()) throw IoError("load_csv: no channel rows in " + csv_path);

  EegRecording rec;
  for (auto& [ch, vals] : rows) rec.samples.push_back(std::move(vals));

  std::filesystem::path meta_path(csv_path);
  meta_path.replace_extension(".json");
  std::ifstream meta(meta_path);
  if (!meta) throw IoError("load_csv: missing sidecar metadata " + meta_path.string());
  nlohmann::json j;
  try {
    meta >> j;
  } catch (const std::exception& e) {
    throw IoError("load_csv: bad sidecar JSON " + meta_path.string() + ": " + e.what());
  }
  if (!j.contains("rate")) throw IoError("load_csv: sidecar missing 'rate'");
  rec.sample_rate = j["rate"].get<double>();
  rec.label = j.value("label", "");
  rec.dataset_id = j.value("dataset_id", "");
  rec.subject_id = j.value("subject_id", "");
  rec.session_id = j.value("session_id", "");
  rec.validate();
  return rec;
}

}  // namespace nq

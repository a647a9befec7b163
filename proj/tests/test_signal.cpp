// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "nq/fft.hpp"
#include "nq/rng.hpp"
#include "nq/signal.hpp"
#include "support/bandpower_oracle.hpp"

using namespace nq;

namespace {

EegRecording tone(double freq, double rate, std::size_t n, double amp = 1.0,
                  std::size_t channels = 1) {
  EegRecording rec;
  rec.sample_rate = rate;
  rec.samples.assign(channels, std::vector<double>(n));
  for (auto& row : rec.samples)
    for (std::size_t t = 0; t < n; ++t)
      row[t] = amp * std::sin(2.0 * 3.14159265358979323846 * freq * t / rate);
  return rec;
}

double total_power(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return p;
}

double power_near(const EegRecording& rec, double f0, double halfwidth) {
  auto mag = fft::magnitude(rec.samples[0]);
  double p = 0.0;
  for (std::size_t k = 0; k < mag.size(); ++k)
    if (std::abs(fft::bin_freq(k, rec.length(), rec.sample_rate) - f0) <= halfwidth)
      p += mag[k] * mag[k];
  return p;
}

double dominant_freq(const EegRecording& rec) {
  auto mag = fft::magnitude(rec.samples[0]);
  std::size_t best = 1;  // skip DC
  for (std::size_t k = 1; k < mag.size(); ++k)
    if (mag[k] > mag[best]) best = k;
  return fft::bin_freq(best, rec.length(), rec.sample_rate);
}

}  // namespace

TEST_CASE("bandpass keeps a 10 Hz tone") {
  auto rec = tone(10.0, 400.0, 800);
  auto out = bandpass(rec, 0.1, 75.0);
  CHECK(out.length() == 800);
  CHECK(out.sample_rate == 400.0);
  CHECK(dominant_freq(out) == doctest::Approx(10.0).epsilon(1e-9));
  double ratio = std::sqrt(power_near(out, 10.0, 1.0) / power_near(rec, 10.0, 1.0));
  CHECK(ratio > 0.9);
  CHECK(ratio < 1.1);
}

TEST_CASE("bandpass suppresses a 120 Hz tone below 1% power") {
  auto rec = tone(120.0, 400.0, 800);
  auto out = bandpass(rec, 0.1, 75.0);
  CHECK(total_power(out.samples[0]) < 0.01 * total_power(rec.samples[0]));
}

TEST_CASE("bandpass of zero signal is zero") {
  EegRecording rec;
  rec.sample_rate = 200.0;
  rec.samples = {std::vector<double>(400, 0.0)};
  auto out = bandpass(rec, 0.1, 75.0);
  for (double v : out.samples[0]) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("bandpass rejects a Nyquist-violating band") {
  auto rec = tone(10.0, 100.0, 300);
  CHECK_THROWS_AS(bandpass(rec, 0.1, 75.0), ConfigError);
  CHECK_THROWS_AS(bandpass(rec, 30.0, 10.0), ConfigError);
}

TEST_CASE("line noise detection flags a strong 50 Hz component") {
  auto rec = tone(10.0, 400.0, 1600);
  auto hum = tone(50.0, 400.0, 1600, 10.0);
  for (std::size_t t = 0; t < rec.length(); ++t) rec.samples[0][t] += hum.samples[0][t];
  auto scan = detect_line_noise(rec);
  REQUIRE(scan.freq.has_value());
  CHECK(*scan.freq == 50.0);
}

TEST_CASE("line noise detection stays quiet on white noise") {
  int false_alarms = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    EegRecording rec;
    rec.sample_rate = 250.0;
    rec.samples.assign(2, std::vector<double>(1000));
    for (auto& row : rec.samples)
      for (auto& v : row) v = rng.gaussian();
    if (detect_line_noise(rec).freq) ++false_alarms;
  }
  CHECK(false_alarms <= 1);
}

TEST_CASE("line noise detection at 100 Hz rate only tests 50") {
  auto rec = tone(10.0, 100.0, 400);
  auto scan = detect_line_noise(rec);
  CHECK(scan.limited_range);
  CHECK(scan.ratio60 == 0.0);
  CHECK(!scan.freq.has_value());
}

TEST_CASE("line noise detection requires two seconds") {
  auto rec = tone(10.0, 400.0, 500);
  CHECK_THROWS_AS(detect_line_noise(rec), ConfigError);
}

TEST_CASE("notch removes 50 Hz and spares 10 Hz") {
  auto hum = tone(50.0, 400.0, 1600);
  auto cleaned = notch(hum, 50.0);
  CHECK(total_power(cleaned.samples[0]) < 0.05 * total_power(hum.samples[0]));

  auto sig = tone(10.0, 400.0, 1600);
  auto kept = notch(sig, 50.0);
  double p_in = power_near(sig, 10.0, 1.0), p_out = power_near(kept, 10.0, 1.0);
  CHECK(std::abs(p_out - p_in) < 0.1 * p_in);

  EegRecording zero;
  zero.sample_rate = 400.0;
  zero.samples = {std::vector<double>(800, 0.0)};
  auto z = notch(zero, 50.0);
  for (double v : z.samples[0]) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("notch rejects frequencies at or above Nyquist") {
  auto rec = tone(10.0, 100.0, 300);
  CHECK_THROWS_AS(notch(rec, 50.0), ConfigError);
}

TEST_CASE("resample halves length and keeps the tone") {
  auto rec = tone(10.0, 400.0, 800);
  auto out = resample(rec, 200.0);
  CHECK(out.length() == 400);
  CHECK(out.sample_rate == 200.0);
  CHECK(std::abs(dominant_freq(out) - 10.0) < 0.5);
}

TEST_CASE("resample at the same rate is the identity") {
  auto rec = tone(7.0, 250.0, 500);
  auto out = resample(rec, 250.0);
  CHECK(out.samples == rec.samples);
}

TEST_CASE("resample arithmetic: 1000 samples at 500 Hz to 200 Hz gives 400") {
  auto rec = tone(5.0, 500.0, 1000);
  CHECK(resample(rec, 200.0).length() == 400);
}

TEST_CASE("resample twice at one target is a no-op on length") {
  auto rec = tone(12.0, 512.0, 1024);
  auto once = resample(rec, 200.0);
  auto twice = resample(once, 200.0);
  CHECK(once.length() == twice.length());
}

TEST_CASE("zscore normalization: mean 0, std 1") {
  EegRecording rec;
  rec.sample_rate = 100.0;
  rec.samples = {{1.0, 2.0, 3.0}};
  auto out = normalize(rec, PreprocessSpec::Norm::kZscore);
  double mean = 0.0;
  for (double v : out.samples[0]) mean += v / 3.0;
  double var = 0.0;
  for (double v : out.samples[0]) var += (v - mean) * (v - mean) / 3.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-12);
}

TEST_CASE("zscore of a constant channel yields zeros") {
  EegRecording rec;
  rec.sample_rate = 100.0;
  rec.samples = {{5.0, 5.0, 5.0, 5.0}};
  auto out = normalize(rec, PreprocessSpec::Norm::kZscore);
  for (double v : out.samples[0]) CHECK(v == 0.0);
}

TEST_CASE("pct95 normalization divides by the 95th percentile of magnitude") {
  EegRecording rec;
  rec.sample_rate = 100.0;
  rec.samples = {{4.0, -4.0, 4.0, -4.0, 4.0}};
  auto out = normalize(rec, PreprocessSpec::Norm::kPct95);
  for (double v : out.samples[0]) CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);

  // Interpolated case, cross-checked against a hand percentile.
  EegRecording rec2;
  rec2.sample_rate = 100.0;
  rec2.samples = {{}};
  for (int i = 1; i <= 100; ++i) rec2.samples[0].push_back(static_cast<double>(i));
  // sorted |x| = 1..100; rank 0.95*99 = 94.05 -> 95*(0.95) + 96*0.05 = 95.05
  auto out2 = normalize(rec2, PreprocessSpec::Norm::kPct95);
  CHECK(out2.samples[0][99] == doctest::Approx(100.0 / 95.05).epsilon(1e-12));
}

TEST_CASE("patch grid arithmetic and reconstruction") {
  EegRecording rec;
  rec.sample_rate = 200.0;
  rec.samples.assign(2, std::vector<double>(1000));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 1000; ++t) rec.samples[c][t] = static_cast<double>(c * 1000 + t);

  auto grid = patch(rec, 200);
  CHECK(grid.patches == 5);
  CHECK(grid.channels == 2);

  // Reconstruction of the first T*t samples is exact.
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t tau = 0; tau < grid.patches; ++tau)
      for (std::size_t i = 0; i < grid.patch_len; ++i)
        CHECK(grid.at(c, tau, i) == rec.samples[c][tau * 200 + i]);

  rec.samples[0].resize(1050);
  rec.samples[1].resize(1050);
  auto grid2 = patch(rec, 200);
  CHECK(grid2.patches == 5);  // trailing 50 samples dropped

  EegRecording tiny;
  tiny.sample_rate = 200.0;
  tiny.samples = {std::vector<double>(100, 0.0)};
  CHECK_THROWS_AS(patch(tiny, 200), ConfigError);
}

TEST_CASE("synthetic generator is deterministic and family channels are disjoint") {
  SynthSpec spec;
  spec.task_id = "alpha-a";
  spec.n_samples = 6;
  spec.seed = 42;
  auto a = synth_task(spec);
  auto b = synth_task(spec);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].samples == b[i].samples);

  auto ca = synth_family_channels(SynthFamily::kAlpha);
  auto cb = synth_family_channels(SynthFamily::kBeta);
  std::set<std::size_t> inter;
  for (auto c : ca)
    if (std::find(cb.begin(), cb.end(), c) != cb.end()) inter.insert(c);
  CHECK(inter.empty());
}

TEST_CASE("synthetic tasks are learnable by the band-power oracle") {
  SynthSpec spec;
  spec.task_id = "alpha-a";
  spec.family = SynthFamily::kAlpha;
  spec.n_samples = 160;
  spec.seed = 3;
  CHECK(testsupport::synth_oracle_accuracy(spec) > 0.9);

  spec.family = SynthFamily::kBeta;
  spec.task_id = "beta-a";
  CHECK(testsupport::synth_oracle_accuracy(spec) > 0.9);
}

TEST_CASE("split planning: 10 subjects at 8:1:1") {
  SynthSpec spec;
  spec.task_id = "alpha-a";
  spec.n_samples = 40;
  spec.n_subjects = 10;
  auto recs = synth_task(spec);

  SplitPlan plan;
  plan.strategy = SplitPlan::Strategy::kBySubjectRatio;
  plan.seed = 5;
  auto idx = plan_splits(recs, plan);

  auto subjects_of = [&](const std::vector<std::size_t>& part) {
    std::set<std::string> s;
    for (auto i : part) s.insert(recs[i].subject_id);
    return s;
  };
  CHECK(subjects_of(idx.train).size() == 8);
  CHECK(subjects_of(idx.val).size() == 1);
  CHECK(subjects_of(idx.test).size() == 1);

  // No subject straddles two splits.
  auto tr = subjects_of(idx.train), va = subjects_of(idx.val), te = subjects_of(idx.test);
  for (const auto& s : va) CHECK(tr.count(s) == 0);
  for (const auto& s : te) {
    CHECK(tr.count(s) == 0);
    CHECK(va.count(s) == 0);
  }
}

TEST_CASE("split planning: degenerate ratios and the partition property") {
  SynthSpec spec;
  spec.task_id = "t";
  spec.n_samples = 23;
  auto recs = synth_task(spec);

  SplitPlan all_train;
  all_train.train = 1.0;
  all_train.val = 0.0;
  all_train.test = 0.0;
  auto idx = plan_splits(recs, all_train);
  CHECK(idx.train.size() == 23);
  CHECK(idx.val.empty());
  CHECK(idx.test.empty());

  for (std::uint64_t seed : {1ULL, 9ULL, 77ULL}) {
    SplitPlan plan;
    plan.seed = seed;
    auto p = plan_splits(recs, plan);
    std::set<std::size_t> seen;
    for (const auto* part : {&p.train, &p.val, &p.test})
      for (auto i : *part) {
        CHECK(seen.count(i) == 0);
        seen.insert(i);
      }
    CHECK(seen.size() == 23);
  }

  // Reproducibility.
  SplitPlan plan;
  plan.seed = 11;
  auto p1 = plan_splits(recs, plan);
  auto p2 = plan_splits(recs, plan);
  CHECK(p1.train == p2.train);
  CHECK(p1.val == p2.val);
  CHECK(p1.test == p2.test);
}

TEST_CASE("split planning fails with fewer groups than splits") {
  SynthSpec spec;
  spec.task_id = "t";
  spec.n_samples = 4;
  spec.n_subjects = 2;
  auto recs = synth_task(spec);
  SplitPlan plan;
  plan.strategy = SplitPlan::Strategy::kBySubjectRatio;
  CHECK_THROWS_AS(plan_splits(recs, plan), ConfigError);
}

TEST_CASE("composed preprocess applies the appendix order and keeps metadata") {
  auto rec = tone(10.0, 400.0, 1600, 1.0, 2);
  auto hum = tone(50.0, 400.0, 1600, 8.0);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < rec.length(); ++t) rec.samples[c][t] += hum.samples[0][t];
  rec.dataset_id = "demo";
  rec.label = "x";
  rec.subject_id = "s1";

  PreprocessSpec spec;
  auto out = preprocess(rec, spec);
  CHECK(out.sample_rate == 200.0);
  CHECK(out.channels() == 2);
  CHECK(out.dataset_id == "demo");
  CHECK(out.label == "x");
  CHECK(out.subject_id == "s1");

  // 50 Hz interference attenuated >= 95% relative to the 10 Hz carrier.
  double p50 = power_near(out, 50.0, 0.5);
  double p10 = power_near(out, 10.0, 0.5);
  CHECK(p50 < 0.05 * p10);
  // z-score holds per channel.
  for (const auto& row : out.samples) {
    double mean = 0.0;
    for (double v : row) mean += v / row.size();
    CHECK(std::abs(mean) < 1e-9);
  }
}

TEST_CASE("eegb round trip preserves payload and metadata") {
  auto rec = tone(9.0, 128.0, 256, 0.7, 3);
  rec.dataset_id = "ds";
  rec.label = "left";
  rec.subject_id = "s7";
  rec.session_id = "sess1";

  auto path = std::filesystem::temp_directory_path() / "nq_test_roundtrip.eegb";
  save_eegb(rec, path.string());
  auto back = load_eegb(path.string());
  CHECK(back.sample_rate == rec.sample_rate);
  CHECK(back.channels() == 3);
  CHECK(back.length() == 256);
  CHECK(back.dataset_id == "ds");
  CHECK(back.label == "left");
  CHECK(back.subject_id == "s7");
  CHECK(back.session_id == "sess1");
  // Payload is float32, so compare at that precision.
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 256; ++t)
      CHECK(back.samples[c][t] ==
            doctest::Approx(rec.samples[c][t]).epsilon(1e-6));
  std::filesystem::remove(path);
}

TEST_CASE("truncated eegb fails cleanly") {
  auto rec = tone(9.0, 128.0, 256);
  auto path = std::filesystem::temp_directory_path() / "nq_test_trunc.eegb";
  save_eegb(rec, path.string());
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  CHECK_THROWS_AS(load_eegb(path.string()), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("csv import with sidecar metadata") {
  auto dir = std::filesystem::temp_directory_path();
  auto csv = dir / "nq_test_import.csv";
  auto json = dir / "nq_test_import.json";
  {
    std::ofstream os(csv);
    os << "0,1.5,2.5,3.5\n1,-1.0,0.0,1.0\n";
    std::ofstream js(json);
    js << R"({"rate": 250.0, "label": "right", "dataset_id": "shu", "subject_id": "s2"})";
  }
  auto rec = load_csv(csv.string());
  CHECK(rec.channels() == 2);
  CHECK(rec.length() == 3);
  CHECK(rec.sample_rate == 250.0);
  CHECK(rec.label == "right");
  CHECK(rec.dataset_id == "shu");
  CHECK(rec.samples[0][1] == 2.5);
  std::filesystem::remove(csv);
  std::filesystem::remove(json);
}

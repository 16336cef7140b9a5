#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vburst/metrics.hpp"
#include "vburst/ops.hpp"
#include "vburst/tensor.hpp"

namespace vburst {

struct GenConfig {
    int n = 1000;
    std::uint64_t seed = 1;
    int class_count = 8;
    int emo_dim = 10;
    int cultures = 4;
    int wave_len = 4000;
    double train_frac = 0.7;
    double val_frac = 0.15;  // remainder is the test split
};

struct Sample {
    int id = 0;
    std::string split;  // train | val | test
    int type_label = 0;
    std::vector<double> high;  // emo_dim values in [0,1]
    double arousal = 0.0;
    double valence = 0.0;
    int culture = 0;
    std::vector<double> wave;  // fixed length, float32-quantized values
};

struct Dataset {
    GenConfig config;
    std::vector<Sample> samples;

    std::vector<int> split_indices(const std::string& split) const {
        std::vector<int> idx;
        for (size_t i = 0; i < samples.size(); ++i)
            if (samples[i].split == split) idx.push_back(static_cast<int>(i));
        return idx;
    }
};

// ---------------------------------------------------------------------------
// Arousal/valence surrogate
// ---------------------------------------------------------------------------

/// Fixed circumplex projection weights for the ten emotion dimensions, in
/// the order amusement, awe, awkwardness, distress, excitement, fear, horror,
/// sadness, surprise, triumph. Positive weights per axis sum to +0.5 and
/// negative weights to -0.5, so 0.5 + w.h stays inside [0,1] for h in [0,1].
/// This mapping is a synthetic surrogate, not the corpus' own derivation.
inline std::pair<std::vector<double>, std::vector<double>> circumplex_weights(int emo_dim) {
    std::vector<double> arousal, valence;
    if (emo_dim == 10) {
        arousal = {0.6, -0.4, -0.3, 0.7, 0.9, 0.8, 0.9, -0.8, 0.7, 0.8};
        valence = {0.9, 0.6, -0.5, -0.8, 0.9, -0.8, -0.9, -0.9, 0.3, 0.9};
    } else {
        // Generalized alternating pattern for non-standard dimension counts.
        for (int d = 0; d < emo_dim; ++d) {
            arousal.push_back(d % 2 == 0 ? 0.8 : -0.6);
            valence.push_back(d % 3 == 0 ? 0.7 : -0.5);
        }
    }
    auto normalize = [](std::vector<double>& w) {
        double pos = 0.0, neg = 0.0;
        for (double v : w) (v > 0 ? pos : neg) += std::abs(v);
        for (double& v : w) v *= 0.5 / (v > 0 ? pos : neg);
    };
    normalize(arousal);
    normalize(valence);
    return {arousal, valence};
}

/// Projects the emotion vector onto (arousal, valence) via the fixed
/// circumplex weights; the all-zero vector maps to the (0.5, 0.5) neutral
/// point.
inline std::pair<double, double> derive_two(const std::vector<double>& high) {
    check(!high.empty(), "derive_two: empty emotion vector");
    for (double v : high)
        check(0.0 <= v && v <= 1.0,
              "derive_two: emotion values must lie in [0,1], got " + std::to_string(v));
    auto [wa, wv] = circumplex_weights(static_cast<int>(high.size()));
    double a = 0.5, v = 0.5;
    for (size_t i = 0; i < high.size(); ++i) {
        a += wa[i] * high[i];
        v += wv[i] * high[i];
    }
    auto clip = [](double x) { return std::min(1.0, std::max(0.0, x)); };
    return {clip(a), clip(v)};
}

/// Truncates (head-aligned) or zero-pads (at the tail) to the target length.
inline std::vector<double> fit_length(const std::vector<double>& wave, int target_len) {
    check(target_len > 0, "fit_length: target length must be positive");
    check(!wave.empty(), "fit_length: empty input");
    std::vector<double> out(wave.begin(),
                            wave.begin() + std::min<size_t>(wave.size(), target_len));
    out.resize(target_len, 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

namespace detail {

// Per-(type, dim) emotion prototype and its per-culture offset; fixed smooth
// functions keep the label structure documented and reproducible.
inline double emotion_prototype(int type, int dim) {
    return 0.5 + 0.3 * std::sin(1.7 * type + 2.3 * dim + 0.9);
}
inline double culture_offset(int type, int culture, int dim) {
    return 0.07 * std::sin(3.1 * type + 1.3 * culture + 0.5 * dim);
}

// Type picks a fundamental period and an envelope shape; culture tilts the
// harmonic balance. Types are separable from the mean spectrum.
inline std::vector<double> synth_wave(int type, int culture, int cultures, int len,
                                      std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double period = 16.0 + 12.0 * type;
    const double omega = 2.0 * 3.14159265358979323846 / period;
    const double phase = unif(rng) * 6.28318530717958647692;
    const double amp2 = 0.2 + 0.5 * culture / std::max(1, cultures - 1);
    const double amp3 = 0.1 + 0.06 * (type % 3);
    const double env_pow = 0.5 + 0.25 * type;
    std::vector<double> wave(len);
    for (int s = 0; s < len; ++s) {
        const double x = static_cast<double>(s) / len;
        const double env = std::pow(std::sin(3.14159265358979323846 * x), env_pow);
        double v = std::sin(omega * s + phase) + amp2 * std::sin(2.0 * omega * s + 1.3 * phase) +
                   amp3 * std::sin(3.0 * omega * s + 2.1 * phase);
        v = env * v + 0.05 * (2.0 * unif(rng) - 1.0);
        wave[s] = static_cast<double>(static_cast<float>(v));  // storage is float32
    }
    return wave;
}

}  // namespace detail

/// Draws a deterministic synthetic dataset shaped like the vocal-burst
/// corpus: uniform burst types, culture-tinted emotion prototypes with
/// bounded noise, arousal/valence derived through the circumplex surrogate,
/// and audio synthesized from a type-dependent spectral template.
inline Dataset generate_synthetic(const GenConfig& cfg) {
    check(cfg.n >= cfg.class_count,
          "generate_synthetic: need at least one sample per class, n=" +
              std::to_string(cfg.n) + " < " + std::to_string(cfg.class_count));
    check(cfg.class_count > 0 && cfg.emo_dim > 0 && cfg.cultures > 0 && cfg.wave_len > 0,
          "generate_synthetic: sizes must be positive");
    check(cfg.train_frac > 0 && cfg.val_frac > 0 && cfg.train_frac + cfg.val_frac < 1.0,
          "generate_synthetic: split fractions must be positive and sum below 1");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<int> type_dist(0, cfg.class_count - 1);
    std::uniform_int_distribution<int> culture_dist(0, cfg.cultures - 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Dataset ds;
    ds.config = cfg;
    ds.samples.reserve(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        Sample s;
        s.id = i;
        s.type_label = type_dist(rng);
        s.culture = culture_dist(rng);
        s.high.resize(cfg.emo_dim);
        for (int d = 0; d < cfg.emo_dim; ++d) {
            double v = detail::emotion_prototype(s.type_label, d) +
                       detail::culture_offset(s.type_label, s.culture, d) +
                       (2.0 * unif(rng) - 1.0) * 0.08;
            s.high[d] = std::min(1.0, std::max(0.0, v));
        }
        auto [a, v] = derive_two(s.high);
        s.arousal = a;
        s.valence = v;
        const double u = unif(rng);
        s.split = u < cfg.train_frac ? "train"
                                     : (u < cfg.train_frac + cfg.val_frac ? "val" : "test");
        s.wave = detail::synth_wave(s.type_label, s.culture, cfg.cultures, cfg.wave_len, rng);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Culture-masked loss
// ---------------------------------------------------------------------------

/// CCC loss over each sample's own 10-slot culture block of the (N,
/// cultures*emo) prediction grid, computed per culture group and averaged
/// over the groups with at least two samples. When no group reaches two
/// samples the rows are pooled into one CCC over the per-sample blocks;
/// `pooled_fallback`, when given, reports that the fallback fired.
inline Tensor culture_masked_loss(const Tensor& pred, const Tensor& high_targets,
                                  const std::vector<int>& culture, int cultures,
                                  bool* pooled_fallback = nullptr) {
    check(pred.rank() == 2 && high_targets.rank() == 2, "culture_masked_loss: rank-2 inputs");
    const int n = pred.shape()[0];
    const int emo = high_targets.shape()[1];
    check(pred.shape()[1] == cultures * emo,
          "culture_masked_loss: prediction width " + std::to_string(pred.shape()[1]) +
          " does not equal cultures*emo_dims " + std::to_string(cultures * emo));
    check(static_cast<int>(culture.size()) == n && high_targets.shape()[0] == n,
          "culture_masked_loss: batch size mismatch");
    for (int c : culture)
        check(0 <= c && c < cultures, "culture_masked_loss: culture id out of range");
    if (pooled_fallback) *pooled_fallback = false;

    std::vector<std::vector<int>> groups(cultures);
    for (int i = 0; i < n; ++i) groups[culture[i]].push_back(i);

    Tensor total;
    int used = 0;
    for (int c = 0; c < cultures; ++c) {
        if (groups[c].size() < 2) continue;  // CCC needs two points
        Tensor block = slice_cols(gather_rows(pred, groups[c]), c * emo, (c + 1) * emo);
        Tensor target = gather_rows(high_targets, groups[c]);
        Tensor l = ccc_loss(block, target);
        total = total.defined() ? add(total, l) : l;
        ++used;
    }
    if (used > 0) return used == 1 ? total : multiply(total, 1.0 / used);

    // No culture has two samples: pool every sample's own block together.
    if (pooled_fallback) *pooled_fallback = true;
    std::vector<Tensor> rows;
    rows.reserve(n);
    for (int i = 0; i < n; ++i)
        rows.push_back(slice_cols(gather_rows(pred, {i}), culture[i] * emo,
                                  (culture[i] + 1) * emo));
    return ccc_loss(concat(rows, 0), high_targets);
}

// ---------------------------------------------------------------------------
// Manifest and signal files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

constexpr char kSignalMagic[8] = {'V', 'B', 'S', 'G', '0', '0', '0', '1'};

}  // namespace detail

/// Comma-delimited manifest, one row per sample:
/// id,split,type,high_0..high_{D-1},arousal,valence,culture
inline void write_manifest(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    check(out.good(), "write_manifest: cannot open " + path);
    out << "id,split,type";
    for (int d = 0; d < ds.config.emo_dim; ++d) out << ",high_" << d;
    out << ",arousal,valence,culture\n";
    for (const auto& s : ds.samples) {
        out << s.id << ',' << s.split << ',' << s.type_label;
        for (double v : s.high) out << ',' << detail::format_double(v);
        out << ',' << detail::format_double(s.arousal) << ','
            << detail::format_double(s.valence) << ',' << s.culture << '\n';
    }
    check(out.good(), "write_manifest: write failed for " + path);
}

/// Signal sidecar: 8-byte magic "VBSG0001", uint32 count, uint32 length,
/// then count*length little-endian float32 samples in manifest id order.
inline void write_signals(const std::string& path, const Dataset& ds) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "write_signals: cannot open " + path);
    out.write(detail::kSignalMagic, 8);
    const std::uint32_t count = static_cast<std::uint32_t>(ds.samples.size());
    const std::uint32_t len = static_cast<std::uint32_t>(ds.config.wave_len);
    out.write(reinterpret_cast<const char*>(&count), 4);
    out.write(reinterpret_cast<const char*>(&len), 4);
    std::vector<float> buf(len);
    for (const auto& s : ds.samples) {
        for (std::uint32_t i = 0; i < len; ++i) buf[i] = static_cast<float>(s.wave[i]);
        out.write(reinterpret_cast<const char*>(buf.data()), sizeof(float) * len);
    }
    check(out.good(), "write_signals: write failed for " + path);
}

inline Dataset read_dataset(const std::string& manifest_path, const std::string& signals_path) {
    std::ifstream in(manifest_path);
    check(in.good(), "read_dataset: cannot open " + manifest_path);
    std::string line;
    check(static_cast<bool>(std::getline(in, line)), "read_dataset: empty manifest");

    auto split_csv = [](const std::string& row) {
        std::vector<std::string> fields;
        std::stringstream ss(row);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        return fields;
    };

    const auto header = split_csv(line);
    check(header.size() >= 7 && header[0] == "id" && header[1] == "split" &&
              header[2] == "type",
          "read_dataset: unexpected manifest header");
    const int emo_dim = static_cast<int>(header.size()) - 6;
    for (int d = 0; d < emo_dim; ++d)
        check(header[3 + d] == "high_" + std::to_string(d),
              "read_dataset: unexpected manifest header column " + header[3 + d]);

    Dataset ds;
    ds.config.emo_dim = emo_dim;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        check(f.size() == header.size(), "read_dataset: malformed row: " + line);
        Sample s;
        s.id = std::stoi(f[0]);
        s.split = f[1];
        check(s.split == "train" || s.split == "val" || s.split == "test",
              "read_dataset: unknown split '" + s.split + "'");
        s.type_label = std::stoi(f[2]);
        for (int d = 0; d < emo_dim; ++d) s.high.push_back(std::stod(f[3 + d]));
        s.arousal = std::stod(f[3 + emo_dim]);
        s.valence = std::stod(f[4 + emo_dim]);
        s.culture = std::stoi(f[5 + emo_dim]);
        for (double v : s.high)
            check(0.0 <= v && v <= 1.0, "read_dataset: emotion label out of [0,1]");
        ds.samples.push_back(std::move(s));
    }

    std::ifstream sig(signals_path, std::ios::binary);
    check(sig.good(), "read_dataset: cannot open " + signals_path);
    char magic[8];
    sig.read(magic, 8);
    check(sig.good() && std::memcmp(magic, detail::kSignalMagic, 8) == 0,
          "read_dataset: bad signal file magic");
    std::uint32_t count = 0, len = 0;
    sig.read(reinterpret_cast<char*>(&count), 4);
    sig.read(reinterpret_cast<char*>(&len), 4);
    check(sig.good() && count == ds.samples.size(),
          "read_dataset: signal count does not match manifest");
    ds.config.wave_len = static_cast<int>(len);
    std::vector<float> buf(len);
    for (auto& s : ds.samples) {
        sig.read(reinterpret_cast<char*>(buf.data()), sizeof(float) * len);
        check(sig.good(), "read_dataset: truncated signal file");
        s.wave.assign(buf.begin(), buf.end());
    }

    int max_type = 0, max_culture = 0;
    for (const auto& s : ds.samples) {
        max_type = std::max(max_type, s.type_label);
        max_culture = std::max(max_culture, s.culture);
    }
    ds.config.n = static_cast<int>(ds.samples.size());
    ds.config.class_count = max_type + 1;
    ds.config.cultures = max_culture + 1;
    return ds;
}

}  // namespace vburst

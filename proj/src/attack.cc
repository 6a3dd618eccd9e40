// Copyright 2026 The ConvShatter Authors.
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

#include "convshatter/attack.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>

#include "convshatter/error.h"
#include "convshatter/ops.h"
#include "convshatter/stats.h"

namespace convshatter {
namespace {

template <typename T>
KernelSet<T> Concatenate(const KernelSet<T>& a, const KernelSet<T>& b) {
  KernelSet<T> out(a.c_out() + b.c_out(), a.c_in(), a.k_h(), a.k_w());
  for (std::size_t o = 0; o < a.c_out(); ++o) {
    std::ranges::copy(a.kernel(o), out.kernel(o).begin());
  }
  for (std::size_t o = 0; o < b.c_out(); ++o) {
    std::ranges::copy(b.kernel(o), out.kernel(a.c_out() + o).begin());
  }
  return out;
}

template <typename T>
std::vector<double> EntriesOf(const KernelSet<T>& k, std::size_t o) {
  const auto span = k.kernel(o);
  return std::vector<double>(span.begin(), span.end());
}

template <typename T>
std::vector<double> AllEntries(const KernelSet<T>& k) {
  const auto span = k.weights();
  return std::vector<double>(span.begin(), span.end());
}

double MeanOf(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Matrix SquareBlock(const Matrix& m) {
  const std::size_t n = std::min(m.rows, m.cols);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = m.at(i, j);
  }
  return out;
}

}  // namespace

Alignment GreedyAlignment(const Matrix& similarity) {
  if (similarity.rows > similarity.cols) {
    throw DimensionError("alignment needs at least as many observed kernels as public ones");
  }
  struct Entry {
    double value;
    std::size_t row;
    std::size_t col;
  };
  std::vector<Entry> entries;
  entries.reserve(similarity.values.size());
  for (std::size_t i = 0; i < similarity.rows; ++i) {
    for (std::size_t j = 0; j < similarity.cols; ++j) {
      entries.push_back({similarity.at(i, j), i, j});
    }
  }
  // Ties broken by (row, col) so the result does not depend on sort stability.
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  });
  Alignment out;
  out.match.assign(similarity.rows, 0);
  out.similarity.assign(similarity.rows, 0.0);
  std::vector<bool> row_used(similarity.rows, false);
  std::vector<bool> col_used(similarity.cols, false);
  std::size_t assigned = 0;
  for (const Entry& e : entries) {
    if (assigned == similarity.rows) break;
    if (row_used[e.row] || col_used[e.col]) continue;
    row_used[e.row] = true;
    col_used[e.col] = true;
    out.match[e.row] = e.col;
    out.similarity[e.row] = e.value;
    ++assigned;
  }
  return out;
}

double AlignmentAccuracy(const Alignment& alignment,
                         std::span<const std::size_t> truth) {
  if (truth.size() != alignment.match.size()) {
    throw DimensionError("ground truth has " + std::to_string(truth.size()) +
                         " entries, alignment has " +
                         std::to_string(alignment.match.size()));
  }
  if (truth.empty()) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (alignment.match[i] == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

template <typename T>
Alignment AlignmentAttack(const KernelSet<T>& public_kernels,
                          const KernelSet<T>& observed,
                          const std::vector<std::size_t>* truth) {
  Alignment out = GreedyAlignment(CosineMatrix(public_kernels, observed));
  if (truth != nullptr) out.accuracy = AlignmentAccuracy(out, *truth);
  return out;
}

double DiagonalGini(std::span<const double> diagonal) {
  const std::size_t n = diagonal.size();
  if (n == 0) return 0.0;
  std::vector<double> d(n);
  std::ranges::transform(diagonal, d.begin(), [](double v) { return std::fabs(v); });
  std::ranges::sort(d);
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  if (total == 0.0) return 0.0;
  // Sum_ij |d_i - d_j| = 2 Sum_i (2i - n + 1) d_(i) over the sorted values.
  double pair_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pair_sum += (2.0 * static_cast<double>(i) - static_cast<double>(n) + 1.0) * d[i];
  }
  const double nn = static_cast<double>(n);
  return std::clamp(2.0 * pair_sum / (2.0 * nn * nn * (total / nn)), 0.0, 1.0);
}

std::vector<double> ResolvedDiagonal(const Matrix& similarity,
                                     const Alignment* alignment) {
  std::vector<double> d;
  if (alignment != nullptr) {
    if (alignment->match.size() != similarity.rows) {
      throw DimensionError("alignment does not match the similarity matrix");
    }
    for (std::size_t i = 0; i < similarity.rows; ++i) {
      d.push_back(similarity.at(i, alignment->match[i]));
    }
    return d;
  }
  if (similarity.rows != similarity.cols) {
    throw DimensionError("diagonal of a non-square matrix needs an alignment");
  }
  for (std::size_t i = 0; i < similarity.rows; ++i) d.push_back(similarity.at(i, i));
  return d;
}

double OffDiagonalEnergyRatio(const Matrix& similarity) {
  if (similarity.rows != similarity.cols || similarity.rows < 2) {
    throw DimensionError("energy ratio needs a square matrix with n >= 2");
  }
  const std::size_t n = similarity.rows;
  double diag = 0.0;
  double off = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = similarity.at(i, j);
      (i == j ? diag : off) += v * v;
    }
  }
  diag /= static_cast<double>(n);
  off /= static_cast<double>(n * (n - 1));
  if (diag == 0.0) return std::numeric_limits<double>::infinity();
  return off / diag;
}

double SortedWeightAnomaly(std::span<const double> weights) {
  const std::size_t n = weights.size();
  if (n < 16) {
    throw SizeError("sorted-weight anomaly needs at least 16 weights, got " +
                    std::to_string(n));
  }
  std::vector<double> s(weights.begin(), weights.end());
  std::ranges::sort(s);
  const std::size_t trim = n / 200;
  const std::size_t lo = trim;
  const std::size_t hi = n - 1 - trim;
  const double slope = (SortedQuantile(s, 0.75) - SortedQuantile(s, 0.25)) /
                        (0.5 * static_cast<double>(n - 1));
  double worst = 0.0;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    worst = std::max(worst, std::fabs(s[i + 1] - 2.0 * s[i] + s[i - 1]));
  }
  if (worst == 0.0) return 0.0;
  if (slope == 0.0) return std::numeric_limits<double>::infinity();
  return worst / slope;
}

std::vector<double> AnomalyBaseline(std::size_t n, std::size_t trials,
                                    std::uint64_t seed) {
  SeededRng rng(seed, StreamId(0, StreamPurpose::kInputs));
  std::vector<double> scores;
  std::vector<double> w(n);
  for (std::size_t t = 0; t < trials; ++t) {
    for (double& v : w) v = rng.Normal();
    scores.push_back(SortedWeightAnomaly(w));
  }
  std::ranges::sort(scores);
  return scores;
}

template <typename T>
DecoyDetection DetectDecoys(const ObfuscatedLayer<T>& layer,
                            const DecoyDetectorOptions& options,
                            const std::vector<bool>* is_decoy) {
  const std::size_t k_total = layer.k_total();
  if (k_total < 2) {
    throw SizeError("decoy detection needs at least 2 auxiliary kernels");
  }
  if (is_decoy != nullptr && is_decoy->size() != k_total) {
    throw DimensionError("decoy marking does not match the auxiliary count");
  }
  DecoyDetection out;
  const std::vector<double> pooled = AllEntries(layer.damaged);
  for (std::size_t p = 0; p < k_total; ++p) {
    const KsResult ks = KsTest(EntriesOf(layer.auxiliary, p), pooled);
    out.entry_statistic.push_back(ks.statistic);
    out.entry_p_value.push_back(ks.p_value);
  }

  const auto aux_stats = KernelStatistics(layer.auxiliary);
  const auto dmg_stats = KernelStatistics(layer.damaged);
  auto column = [](const std::vector<KernelStats>& stats, int which) {
    std::vector<double> v;
    for (const auto& s : stats) {
      if (which == 0) v.push_back(s.norm);
      if (which == 1) v.push_back(s.variance);
      if (which == 2 && s.kurtosis) v.push_back(*s.kurtosis);
    }
    return v;
  };
  out.norm_p_value = KsTest(column(aux_stats, 0), column(dmg_stats, 0)).p_value;
  out.variance_p_value = KsTest(column(aux_stats, 1), column(dmg_stats, 1)).p_value;
  out.kurtosis_p_value = KsTest(column(aux_stats, 2), column(dmg_stats, 2)).p_value;

  std::vector<std::size_t> order(k_total);
  std::iota(order.begin(), order.end(), 0);
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) {
    if (out.entry_statistic[a] != out.entry_statistic[b]) {
      return out.entry_statistic[a] > out.entry_statistic[b];
    }
    return a < b;
  });
  if (options.assumed_decoys) {
    const std::size_t k = std::min(*options.assumed_decoys, k_total);
    out.flagged.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    const double threshold = options.alpha / static_cast<double>(k_total);
    for (std::size_t p : order) {
      if (out.entry_p_value[p] < threshold) out.flagged.push_back(p);
    }
  }
  std::ranges::sort(out.flagged);

  if (is_decoy != nullptr) {
    const auto decoys =
        static_cast<std::size_t>(std::ranges::count(*is_decoy, true));
    out.chance = static_cast<double>(decoys) / static_cast<double>(k_total);
    if (out.flagged.empty()) {
      out.accuracy = decoys == 0 ? 1.0 : 0.0;
    } else {
      std::size_t hits = 0;
      for (std::size_t p : out.flagged) {
        if ((*is_decoy)[p]) ++hits;
      }
      out.accuracy = static_cast<double>(hits) / static_cast<double>(out.flagged.size());
    }
  }
  return out;
}

template <typename T>
std::vector<bool> DecoyMarking(const SealedLayer<T>& secrets, std::size_t k_total) {
  std::vector<bool> decoy(k_total, true);
  for (std::uint32_t p : secrets.real_positions) {
    if (p >= k_total) throw DimensionError("real position outside the auxiliary set");
    decoy[p] = false;
  }
  return decoy;
}

template <typename T>
KernelSet<T> SynthesizeCounterpart(const KernelSet<T>& kernels, double correlation,
                                   SeededRng& rng) {
  if (!(correlation > 0.0 && correlation <= 1.0)) {
    throw ConfigError("counterpart correlation must be in (0, 1]");
  }
  KernelSet<T> out = kernels;
  const double factor = 1.0 / (correlation * correlation) - 1.0;
  for (std::size_t o = 0; o < out.c_out(); ++o) {
    auto k = out.kernel(o);
    double mean_square = 0.0;
    for (T v : k) mean_square += static_cast<double>(v) * v;
    mean_square /= static_cast<double>(k.size());
    const double sigma = std::sqrt(mean_square * factor);
    for (T& v : k) v = static_cast<T>(v + sigma * rng.Normal());
  }
  return out;
}

template <typename T>
LeakageReport AnalyzeLayer(std::size_t layer_id, const KernelSet<T>& public_kernels,
                           const BundleLayer<T>& observed, const SealedLayer<T>* truth,
                           const LeakageOptions& options) {
  LeakageReport report;
  report.layer_id = layer_id;
  const auto* obfuscated = std::get_if<ObfuscatedLayer<T>>(&observed);
  const KernelSet<T>* square = nullptr;
  KernelSet<T> columns;
  std::vector<std::size_t> truth_index;
  bool have_truth = false;

  if (obfuscated != nullptr) {
    report.protected_layer = true;
    square = &obfuscated->damaged;
    columns = Concatenate(obfuscated->damaged, obfuscated->auxiliary);
    if (truth != nullptr) {
      if (truth->output_perm.size() != public_kernels.c_out()) {
        throw DimensionError("ground truth does not match layer " +
                             std::to_string(layer_id));
      }
      const Permutation inverse = truth->output_perm.Inverse();
      truth_index.assign(inverse.map().begin(), inverse.map().end());
      have_truth = true;
    }
  } else {
    const auto& plain = std::get<LayerDescriptor<T>>(observed);
    if (!IsLinear(plain.kind)) {
      throw DimensionError("layer " + std::to_string(layer_id) + " has no kernels");
    }
    square = &plain.kernels;
    columns = plain.kernels;
    truth_index.resize(plain.kernels.c_out());
    std::iota(truth_index.begin(), truth_index.end(), 0);
    have_truth = true;
  }
  if (square->c_out() != public_kernels.c_out()) {
    throw DimensionError("layer " + std::to_string(layer_id) + ": public model has " +
                         std::to_string(public_kernels.c_out()) + " kernels, observed " +
                         std::to_string(square->c_out()));
  }

  report.similarity = CosineMatrix(public_kernels, columns);
  report.alignment = GreedyAlignment(report.similarity);
  if (have_truth) report.alignment.accuracy = AlignmentAccuracy(report.alignment, truth_index);

  const Matrix block = SquareBlock(report.similarity);
  const std::size_t n = block.rows;
  std::vector<double> diag;
  std::vector<double> off;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      (i == j ? diag : off).push_back(std::fabs(block.at(i, j)));
    }
  }
  report.diagonal_mean = MeanOf(diag);
  report.offdiag_mean = MeanOf(off);
  report.diagonal_gini = DiagonalGini(ResolvedDiagonal(block));
  report.aligned_gini =
      DiagonalGini(ResolvedDiagonal(report.similarity, &report.alignment));
  report.energy_ratio =
      n >= 2 ? OffDiagonalEnergyRatio(block) : std::numeric_limits<double>::quiet_NaN();

  if (obfuscated != nullptr && obfuscated->k_total() >= 2) {
    DecoyDetectorOptions decoy_options = options.decoy;
    std::vector<bool> marking;
    if (truth != nullptr) {
      marking = DecoyMarking(*truth, obfuscated->k_total());
      if (!decoy_options.assumed_decoys) {
        decoy_options.assumed_decoys =
            obfuscated->k_total() - truth->real_positions.size();
      }
    }
    report.decoys =
        DetectDecoys(*obfuscated, decoy_options, truth != nullptr ? &marking : nullptr);
  }

  const std::vector<double> weights = AllEntries(columns);
  if (weights.size() >= 16) {
    report.sorted_anomaly = SortedWeightAnomaly(weights);
    const auto baseline =
        AnomalyBaseline(weights.size(), options.anomaly_trials, options.seed + layer_id);
    if (!baseline.empty()) report.anomaly_baseline_q99 = SortedQuantile(baseline, 0.99);
  }
  return report;
}

void WriteLeakageReport(std::ostream& out, std::span<const LeakageReport> reports) {
  const auto flags = out.flags();
  out << std::setprecision(6);
  for (const auto& r : reports) {
    out << "[layer " << r.layer_id << "]\n";
    out << "protected: " << (r.protected_layer ? "true" : "false") << '\n';
    out << "public_kernels: " << r.similarity.rows << '\n';
    out << "observed_kernels: " << r.similarity.cols << '\n';
    out << "diagonal_mean: " << r.diagonal_mean << '\n';
    out << "offdiag_mean: " << r.offdiag_mean << '\n';
    out << "diagonal_gini: " << r.diagonal_gini << '\n';
    out << "aligned_gini: " << r.aligned_gini << '\n';
    out << "energy_ratio: " << r.energy_ratio << '\n';
    if (r.alignment.accuracy) {
      out << "alignment_accuracy: " << *r.alignment.accuracy << '\n';
    } else {
      out << "alignment_accuracy: n/a\n";
    }
    if (r.decoys) {
      const auto& d = *r.decoys;
      out << "decoy_norm_p: " << d.norm_p_value << '\n';
      out << "decoy_variance_p: " << d.variance_p_value << '\n';
      out << "decoy_kurtosis_p: " << d.kurtosis_p_value << '\n';
      out << "decoy_entry_p:";
      for (double p : d.entry_p_value) out << ' ' << p;
      out << '\n';
      out << "decoy_flagged:";
      for (std::size_t p : d.flagged) out << ' ' << p;
      out << '\n';
      if (d.accuracy) out << "decoy_accuracy: " << *d.accuracy << '\n';
      if (d.chance) out << "decoy_chance: " << *d.chance << '\n';
    }
    out << "sorted_anomaly: " << r.sorted_anomaly << '\n';
    out << "sorted_anomaly_baseline_q99: " << r.anomaly_baseline_q99 << '\n';
    out << '\n';
  }
  out.flags(flags);
}

void WriteSimilarityMatrix(std::ostream& out, const Matrix& similarity) {
  const auto flags = out.flags();
  out << std::setprecision(9);
  for (std::size_t i = 0; i < similarity.rows; ++i) {
    for (std::size_t j = 0; j < similarity.cols; ++j) {
      if (j > 0) out << '\t';
      out << similarity.at(i, j);
    }
    out << '\n';
  }
  out.flags(flags);
}

#define CONVSHATTER_INSTANTIATE(T)                                                  \
  template Alignment AlignmentAttack(const KernelSet<T>&, const KernelSet<T>&,      \
                                     const std::vector<std::size_t>*);              \
  template DecoyDetection DetectDecoys(const ObfuscatedLayer<T>&,                   \
                                       const DecoyDetectorOptions&,                 \
                                       const std::vector<bool>*);                   \
  template std::vector<bool> DecoyMarking(const SealedLayer<T>&, std::size_t);      \
  template KernelSet<T> SynthesizeCounterpart(const KernelSet<T>&, double,          \
                                              SeededRng&);                          \
  template LeakageReport AnalyzeLayer(std::size_t, const KernelSet<T>&,             \
                                      const BundleLayer<T>&, const SealedLayer<T>*, \
                                      const LeakageOptions&);

CONVSHATTER_INSTANTIATE(float)
CONVSHATTER_INSTANTIATE(double)

#undef CONVSHATTER_INSTANTIATE

}  // namespace convshatter

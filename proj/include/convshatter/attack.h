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

#ifndef CONVSHATTER_ATTACK_H_
#define CONVSHATTER_ATTACK_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "convshatter/bundle.h"
#include "convshatter/rng.h"
#include "convshatter/tensor.h"

namespace convshatter {

struct Alignment {
  std::vector<std::size_t> match;  // match[i] = observed column paired with row i
  std::vector<double> similarity;  // cosine of each chosen pair
  std::optional<double> accuracy;  // set when ground truth was supplied
};

// Greedy matching: repeatedly take the largest remaining entry of the matrix,
// pairing its row and column. Requires rows <= cols.
Alignment GreedyAlignment(const Matrix& similarity);

// Fraction of rows with match[i] == truth[i].
double AlignmentAccuracy(const Alignment& alignment,
                         std::span<const std::size_t> truth);

// truth[i] is the observed index of public kernel i, if known.
template <typename T>
Alignment AlignmentAttack(const KernelSet<T>& public_kernels,
                          const KernelSet<T>& observed,
                          const std::vector<std::size_t>* truth = nullptr);

// Sum_ij |d_i - d_j| / (2 n^2 mean), on absolute values; 0 when the mean is 0.
double DiagonalGini(std::span<const double> diagonal);

// Diagonal of a square matrix, or the pairs picked by `alignment`.
std::vector<double> ResolvedDiagonal(const Matrix& similarity,
                                     const Alignment* alignment = nullptr);

// Mean squared off-diagonal entry over mean squared diagonal entry of a square
// matrix. +inf when the diagonal is all zero.
double OffDiagonalEnergyRatio(const Matrix& similarity);

// Largest |second difference| of the sorted weights, in units of the
// interquartile slope, ignoring the outer 0.5% at each end.
double SortedWeightAnomaly(std::span<const double> weights);

// Ascending anomaly scores of `trials` i.i.d. N(0, 1) arrays of length n.
std::vector<double> AnomalyBaseline(std::size_t n, std::size_t trials,
                                    std::uint64_t seed);

struct DecoyDetectorOptions {
  double alpha = 0.05;
  // Number of auxiliaries to flag. When empty, every auxiliary whose
  // Bonferroni-corrected entry p-value falls below alpha is flagged.
  std::optional<std::size_t> assumed_decoys;
};

struct DecoyDetection {
  std::vector<double> entry_statistic;  // per auxiliary, KS D vs damaged entries
  std::vector<double> entry_p_value;
  double norm_p_value = 1.0;  // auxiliary population vs damaged population
  double variance_p_value = 1.0;
  double kurtosis_p_value = 1.0;
  std::vector<std::size_t> flagged;  // auxiliary positions, ascending
  std::optional<double> accuracy;    // precision against the true marking
  std::optional<double> chance;      // k_fake / k_total
};

// is_decoy[p] marks auxiliary position p, when known.
template <typename T>
DecoyDetection DetectDecoys(const ObfuscatedLayer<T>& layer,
                            const DecoyDetectorOptions& options = {},
                            const std::vector<bool>* is_decoy = nullptr);

// True decoy marking of a protected layer's auxiliary positions.
template <typename T>
std::vector<bool> DecoyMarking(const SealedLayer<T>& secrets, std::size_t k_total);

// Kernels plus N(0, s^2) noise with s^2 = mean_square * (1 / rho^2 - 1) per
// kernel, so each kernel's cosine to the original is close to rho.
template <typename T>
KernelSet<T> SynthesizeCounterpart(const KernelSet<T>& kernels, double correlation,
                                   SeededRng& rng);

struct LeakageReport {
  std::size_t layer_id = 0;
  bool protected_layer = false;
  // Public kernels (rows) vs observed kernels (columns); for a protected layer
  // the columns are the damaged kernels followed by the auxiliaries.
  Matrix similarity;
  double diagonal_mean = 0.0;  // |cos| at same positions, square block
  double offdiag_mean = 0.0;
  double diagonal_gini = 0.0;  // same-position diagonal
  double aligned_gini = 0.0;   // pairs chosen by the alignment attack
  double energy_ratio = 0.0;
  Alignment alignment;
  std::optional<DecoyDetection> decoys;
  double sorted_anomaly = 0.0;
  double anomaly_baseline_q99 = 0.0;
};

struct LeakageOptions {
  DecoyDetectorOptions decoy;
  std::size_t anomaly_trials = 200;
  std::uint64_t seed = 0;
};

// `truth` enables evaluation mode for a protected layer.
template <typename T>
LeakageReport AnalyzeLayer(std::size_t layer_id, const KernelSet<T>& public_kernels,
                           const BundleLayer<T>& observed,
                           const SealedLayer<T>* truth = nullptr,
                           const LeakageOptions& options = {});

// key: value lines, one block per layer.
void WriteLeakageReport(std::ostream& out, std::span<const LeakageReport> reports);

// Tab-separated rows.
void WriteSimilarityMatrix(std::ostream& out, const Matrix& similarity);

}  // namespace convshatter

#endif  // CONVSHATTER_ATTACK_H_

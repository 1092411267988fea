#pragma once
// Per-modality treatment effects of the student's inputs on its batch
// margins, and the distillation weights derived from them.

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace ckd {

inline constexpr double kEffectEpsilon = 1e-8;

// delta_full - delta_without_m per triple.
std::vector<double> ite(std::span<const double> delta_full,
                        std::span<const double> delta_without_m);

// Mean over the batch. Throws DataError on an empty batch.
double ate(std::span<const double> ite_values);

// gamma / max(sum of teacher margins, eps), clamped below at 0.
double rho(double gamma, double teacher_margin_sum);

// lambda_m = 1 - rho_m / sum(rho); uniform (M-1)/M when sum(rho) < eps.
// Needs at least two modalities.
std::vector<double> reweight(std::span<const double> rho_values);

struct ModalityEffect {
  std::string modality;
  std::vector<double> ite_values;
  double ate = 0.0;
  double teacher_margin_sum = 0.0;
  double rho = 0.0;
  double lambda_weight = 0.0;
};

struct CausalReport {
  std::vector<ModalityEffect> modalities;
  bool uniform_fallback = false;

  std::vector<double> lambdas() const;
  // Batch-level summary (ITE lists omitted).
  nlohmann::json to_json() const;
};

// delta_without[m] is the student margin with modality m ablated;
// teacher_margins[m] the frozen teacher's margins for the same triples.
CausalReport estimate_effects(std::span<const std::string> modality_ids,
                              std::span<const double> delta_full,
                              std::span<const std::vector<double>> delta_without,
                              std::span<const std::vector<double>> teacher_margins);

}  // namespace ckd

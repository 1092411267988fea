#include "ckd/counterfactual.hpp"

#include <algorithm>

#include "ckd/errors.hpp"

namespace ckd {

std::vector<double> ite(std::span<const double> delta_full,
                        std::span<const double> delta_without_m) {
  if (delta_full.size() != delta_without_m.size())
    throw ConfigError("ite: margin lists differ in length");
  std::vector<double> out(delta_full.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = delta_full[t] - delta_without_m[t];
  return out;
}

double ate(std::span<const double> ite_values) {
  if (ite_values.empty()) throw DataError("ate: empty batch");
  double s = 0.0;
  for (double v : ite_values) s += v;
  return s / static_cast<double>(ite_values.size());
}

double rho(double gamma, double teacher_margin_sum) {
  const double r = gamma / std::max(teacher_margin_sum, kEffectEpsilon);
  return std::max(r, 0.0);
}

std::vector<double> reweight(std::span<const double> rho_values) {
  if (rho_values.size() < 2) throw ConfigError("reweight needs at least two modalities");
  double total = 0.0;
  for (double r : rho_values) total += r;
  const double n = static_cast<double>(rho_values.size());
  std::vector<double> out(rho_values.size());
  if (total < kEffectEpsilon) {
    std::fill(out.begin(), out.end(), (n - 1.0) / n);
    return out;
  }
  // Multiplying by the reciprocal keeps simple ratios such as (0.2, 0.6) exact.
  const double inv = 1.0 / total;
  for (std::size_t m = 0; m < out.size(); ++m) out[m] = 1.0 - rho_values[m] * inv;
  return out;
}

std::vector<double> CausalReport::lambdas() const {
  std::vector<double> out;
  for (const auto& m : modalities) out.push_back(m.lambda_weight);
  return out;
}

nlohmann::json CausalReport::to_json() const {
  nlohmann::json j;
  j["uniform_fallback"] = uniform_fallback;
  j["modalities"] = nlohmann::json::array();
  for (const auto& m : modalities)
    j["modalities"].push_back({{"modality", m.modality},
                               {"ate", m.ate},
                               {"teacher_margin_sum", m.teacher_margin_sum},
                               {"rho", m.rho},
                               {"lambda", m.lambda_weight}});
  return j;
}

CausalReport estimate_effects(std::span<const std::string> modality_ids,
                              std::span<const double> delta_full,
                              std::span<const std::vector<double>> delta_without,
                              std::span<const std::vector<double>> teacher_margins) {
  if (delta_without.size() != modality_ids.size() || teacher_margins.size() != modality_ids.size())
    throw ConfigError("estimate_effects: one margin list per modality is required");
  CausalReport report;
  std::vector<double> rhos;
  for (std::size_t m = 0; m < modality_ids.size(); ++m) {
    ModalityEffect e;
    e.modality = modality_ids[m];
    e.ite_values = ite(delta_full, delta_without[m]);
    e.ate = ate(e.ite_values);
    for (double v : teacher_margins[m]) e.teacher_margin_sum += v;
    e.rho = rho(e.ate, e.teacher_margin_sum);
    rhos.push_back(e.rho);
    report.modalities.push_back(std::move(e));
  }
  double total = 0.0;
  for (double r : rhos) total += r;
  report.uniform_fallback = total < kEffectEpsilon;
  const auto lambdas = reweight(rhos);
  for (std::size_t m = 0; m < lambdas.size(); ++m) report.modalities[m].lambda_weight = lambdas[m];
  return report;
}

}  // namespace ckd

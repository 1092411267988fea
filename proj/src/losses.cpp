#include "ckd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ckd/errors.hpp"
#include "ckd/math.hpp"

namespace ckd {
namespace {

void check_pair(std::span<const double> teacher, std::span<const double> student) {
  if (teacher.size() != student.size())
    throw ConfigError("teacher and student margins differ in length");
}

// Binary cross-entropy of sigma(z) against target t in logit form:
//   -(t ln sigma(z) + (1 - t) ln(1 - sigma(z))) = softplus(z) - t z
double bce_logits(double z, double t) { return softplus(z) - t * z; }

}  // namespace

SdVariant parse_sd_variant(std::string_view name) {
  if (name == "hinge") return SdVariant::hinge;
  if (name == "kl") return SdVariant::kl;
  if (name == "mse") return SdVariant::mse;
  throw ConfigError("unknown sd variant '" + std::string(name) + "' (hinge, kl, mse)");
}

std::string_view to_string(SdVariant v) {
  switch (v) {
    case SdVariant::hinge: return "hinge";
    case SdVariant::kl: return "kl";
    case SdVariant::mse: return "mse";
  }
  return "hinge";
}

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(lambda_g >= 0.0) || !(lambda_kd >= 0.0))
    throw ConfigError("loss weights must be nonnegative");
}

LossValue bpr_loss(std::span<const double> delta) {
  LossValue out;
  out.grad.resize(delta.size());
  for (std::size_t t = 0; t < delta.size(); ++t) {
    out.value += neg_log_sigmoid(delta[t]);
    out.grad[t] = -sigmoid(-delta[t]);
  }
  return out;
}

LossValue specific_distill(std::span<const double> teacher, std::span<const double> student) {
  check_pair(teacher, student);
  LossValue out;
  out.grad.resize(student.size());
  for (std::size_t t = 0; t < student.size(); ++t) {
    const double gap = teacher[t] - student[t];
    if (gap > 0.0) {
      out.value += gap;
      out.grad[t] = -1.0;
    }
  }
  return out;
}

double temp_sigmoid(double delta, double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  return sigmoid(delta / tau);
}

LossValue generic_distill(std::span<const double> teacher, std::span<const double> student,
                          double tau) {
  check_pair(teacher, student);
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  LossValue out;
  out.grad.resize(student.size());
  for (std::size_t t = 0; t < student.size(); ++t) {
    const double target = sigmoid(teacher[t] / tau);
    const double z = student[t] / tau;
    out.value += bce_logits(z, target);
    out.grad[t] = (sigmoid(z) - target) / tau;
  }
  return out;
}

LossValue sd_variant_kl(std::span<const double> teacher, std::span<const double> student,
                        double tau) {
  check_pair(teacher, student);
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  LossValue out;
  out.grad.resize(student.size());
  for (std::size_t t = 0; t < student.size(); ++t) {
    const double zt = teacher[t] / tau;
    const double target = sigmoid(zt);
    const double z = student[t] / tau;
    // KL = CE(t, s) - H(t); clamp rounding below zero
    out.value += std::max(0.0, bce_logits(z, target) - bce_logits(zt, target));
    out.grad[t] = (sigmoid(z) - target) / tau;
  }
  return out;
}

LossValue sd_variant_mse(std::span<const double> teacher, std::span<const double> student) {
  check_pair(teacher, student);
  LossValue out;
  out.grad.resize(student.size());
  for (std::size_t t = 0; t < student.size(); ++t) {
    const double gap = teacher[t] - student[t];
    out.value += gap * gap;
    out.grad[t] = -2.0 * gap;
  }
  return out;
}

LossValue specific_loss(const LossConfig& config, std::span<const double> teacher,
                        std::span<const double> student) {
  switch (config.sd_variant) {
    case SdVariant::hinge: return specific_distill(teacher, student);
    case SdVariant::kl: return sd_variant_kl(teacher, student, config.tau);
    case SdVariant::mse: return sd_variant_mse(teacher, student);
  }
  return specific_distill(teacher, student);
}

double total_loss(double bpr, std::span<const double> modality_losses,
                  std::span<const double> lambda_m, double lambda_kd) {
  if (modality_losses.size() != lambda_m.size())
    throw ConfigError("one weight per modality loss is required");
  double kd = 0.0;
  for (std::size_t m = 0; m < lambda_m.size(); ++m) kd += lambda_m[m] * modality_losses[m];
  return bpr + lambda_kd * kd;
}

}  // namespace ckd

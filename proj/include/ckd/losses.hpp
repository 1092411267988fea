#pragma once
// Training objectives over per-triple margins. Every loss is a sum over the
// batch and returns its value with dL/d(student margin) per triple. Teacher
// margins are constants.

#include <span>
#include <string_view>
#include <vector>

namespace ckd {

enum class SdVariant { hinge, kl, mse };

SdVariant parse_sd_variant(std::string_view name);
std::string_view to_string(SdVariant v);

struct LossConfig {
  double lambda_g = 1.0;
  double lambda_kd = 0.1;
  double tau = 0.1;
  SdVariant sd_variant = SdVariant::hinge;

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;  // dL/d(student margin)
};

// sum softplus(-delta); grad -(1 - sigma(delta)).
LossValue bpr_loss(std::span<const double> delta);

// sum max(teacher - student, 0); subgradient -1 where teacher > student, 0 at ties.
LossValue specific_distill(std::span<const double> teacher, std::span<const double> student);

double temp_sigmoid(double delta, double tau);

// Temperature-sigmoid cross-entropy of the student against the teacher.
LossValue generic_distill(std::span<const double> teacher, std::span<const double> student,
                          double tau);

LossValue sd_variant_kl(std::span<const double> teacher, std::span<const double> student,
                        double tau);
LossValue sd_variant_mse(std::span<const double> teacher, std::span<const double> student);

// Dispatches on config.sd_variant.
LossValue specific_loss(const LossConfig& config, std::span<const double> teacher,
                        std::span<const double> student);

inline double modality_loss(double sd, double gd, double lambda_g) { return lambda_g * gd + sd; }

double total_loss(double bpr, std::span<const double> modality_losses,
                  std::span<const double> lambda_m, double lambda_kd);

}  // namespace ckd

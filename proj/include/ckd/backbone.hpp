#pragma once
// VBPR-style late-fusion scorer:
//   score(u, i) = x_u . x_i + sum_m p_u^m . (W_m e_i^m)
// with per-modality ablation (mean substitution), batched pairwise margins,
// analytic gradients and Adam.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ckd/data.hpp"
#include "ckd/tensor.hpp"

namespace ckd {

// Set of modality indices kept informative in a forward pass.
class ModalityMask {
 public:
  constexpr ModalityMask() = default;
  static ModalityMask all(std::size_t n_modalities);
  static ModalityMask only(std::size_t m) { return ModalityMask(std::uint32_t{1} << m); }
  static ModalityMask all_except(std::size_t n_modalities, std::size_t m);
  static constexpr ModalityMask none() { return {}; }

  bool contains(std::size_t m) const { return (bits_ >> m) & 1u; }
  std::uint32_t bits() const { return bits_; }
  friend bool operator==(ModalityMask, ModalityMask) = default;

 private:
  explicit constexpr ModalityMask(std::uint32_t bits) : bits_(bits) {}
  std::uint32_t bits_ = 0;
};

inline constexpr std::size_t kMaxModalities = 32;

struct ModelShape {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t dim = 0;
  std::vector<std::size_t> feature_dims;  // d_m per modality

  static ModelShape of(const InteractionData& data, std::span<const ModalityFeatures> features,
                       std::size_t dim);
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct ModelParams {
  std::size_t dim = 0;
  Matrix user_id;                   // n_users x d
  Matrix item_id;                   // n_items x d
  std::vector<Matrix> user_pref;    // per modality: n_users x d
  std::vector<Matrix> projection;   // per modality: d x d_m

  static ModelParams zeros(const ModelShape& shape);
  ModelShape shape() const;
  std::size_t n_modalities() const { return user_pref.size(); }

  // Stable tensor order: user_id, item_id, then pref/<m>, proj/<m> per modality.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Each tensor uniform in +-sqrt(6 / (rows + cols)). Deterministic in seed.
ModelParams init_xavier(const ModelShape& shape, std::uint64_t seed);

// Throws ConfigError when features do not match the parameter shapes.
void check_compatible(const ModelParams& params, std::span<const ModalityFeatures> features);

// Mean substitutes used when a modality is ablated.
struct AblationMeans {
  std::vector<std::vector<double>> pref_mean;       // p_bar^m (d)
  std::vector<std::vector<double>> projected_mean;  // W_m e_bar^m (d)
};

AblationMeans compute_ablation_means(const ModelParams& params,
                                     std::span<const ModalityFeatures> features);

double score_full(const ModelParams& params, std::span<const ModalityFeatures> features, Index u,
                  Index i);
// Modalities outside `keep` use p_bar^m and e_bar^m.
double score_masked(const ModelParams& params, std::span<const ModalityFeatures> features, Index u,
                    Index i, ModalityMask keep);

// Scores many (u, i) pairs against one parameter snapshot: item projections
// and ablation means are computed once. Results equal score_masked exactly.
class Scorer {
 public:
  Scorer(const ModelParams& params, std::span<const ModalityFeatures> features);

  double score(Index u, Index i, ModalityMask keep) const;
  void score_items(Index u, ModalityMask keep, std::span<double> out) const;
  std::size_t n_items() const { return params_->item_id.rows; }

 private:
  const ModelParams* params_;
  std::vector<Matrix> projected_items_;  // per modality: n_items x d
  AblationMeans means_;
};

// Per-triple pairwise margins. The id part and modality parts are kept apart
// so that any mask's margin is id_margin + the kept modality_diff terms.
struct BatchMargins {
  std::vector<double> id_margin;  // x_u.x_a - x_u.x_b
  Matrix modality_diff;           // triples x modalities: S^m = p_u^m W_m (e_a - e_b)
  ModalityMask keep;              // mask `delta` was computed for
  std::vector<double> delta;

  std::size_t size() const { return id_margin.size(); }
  std::size_t n_modalities() const { return modality_diff.cols; }
  std::vector<double> delta_for(ModalityMask mask) const;
};

BatchMargins forward_batch(const ModelParams& params, std::span<const ModalityFeatures> features,
                           const TripleBatch& batch, ModalityMask keep);

// Accumulates dL/d(delta) coefficients from several forward variants of one
// batch so the backward pass touches each triple once.
class MarginGradient {
 public:
  MarginGradient(std::size_t n_triples, std::size_t n_modalities);

  // Adds scale * dL/d(delta_keep) for every triple.
  void add(ModalityMask keep, std::span<const double> dloss_ddelta, double scale = 1.0);

  std::span<const double> id() const { return id_; }
  double modality(std::size_t t, std::size_t m) const { return modality_(t, m); }
  std::size_t size() const { return id_.size(); }
  std::size_t n_modalities() const { return modality_.cols; }

 private:
  std::vector<double> id_;
  Matrix modality_;
};

// grads += dL/dparams. Mean substitutes are constants (no gradient), so
// ablated modalities receive nothing.
void backward(const ModelParams& params, std::span<const ModalityFeatures> features,
              const TripleBatch& batch, const MarginGradient& dloss, ModelParams& grads);
void backward(const ModelParams& params, std::span<const ModalityFeatures> features,
              const TripleBatch& batch, ModalityMask keep, std::span<const double> dloss_ddelta,
              ModelParams& grads);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  ModelParams first_moment;
  ModelParams second_moment;

  static AdamState for_params(const ModelParams& params);
};

// One bias-corrected Adam update. Throws DivergenceError naming the tensor
// when a gradient or an updated parameter is non-finite.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr);

struct BridgeResult {
  double bridge = 0.0;                     // 1 / (1 + e^{margin})
  std::vector<double> closed_form;         // dL/dS^m = -bridge for every m
  std::vector<double> finite_difference;   // central differences on S^m
};

// dL/dS^m of the single-triple BPR loss -ln sigma(id_margin + sum_m S^m).
BridgeResult gradient_bridge(double id_margin, std::span<const double> modality_diff,
                             double h = 1e-6);
BridgeResult gradient_bridge(const ModelParams& params, std::span<const ModalityFeatures> features,
                             const Triple& triple, double h = 1e-6);

}  // namespace ckd

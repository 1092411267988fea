#include "ckd/backbone.hpp"

#include <cmath>

#include "ckd/errors.hpp"
#include "ckd/kernels.hpp"
#include "ckd/math.hpp"
#include "ckd/rng.hpp"

namespace ckd {

ModalityMask ModalityMask::all(std::size_t n_modalities) {
  if (n_modalities > kMaxModalities) throw ConfigError("too many modalities");
  return ModalityMask(n_modalities == kMaxModalities ? ~std::uint32_t{0}
                                                     : (std::uint32_t{1} << n_modalities) - 1);
}

ModalityMask ModalityMask::all_except(std::size_t n_modalities, std::size_t m) {
  return ModalityMask(all(n_modalities).bits_ & ~(std::uint32_t{1} << m));
}

ModelShape ModelShape::of(const InteractionData& data, std::span<const ModalityFeatures> features,
                          std::size_t dim) {
  ModelShape s{data.n_users, data.n_items, dim, {}};
  for (const auto& f : features) s.feature_dims.push_back(f.dim());
  return s;
}

ModelParams ModelParams::zeros(const ModelShape& shape) {
  if (shape.n_users == 0 || shape.n_items == 0 || shape.dim == 0)
    throw ConfigError("model dimensions must be positive");
  if (shape.feature_dims.size() > kMaxModalities) throw ConfigError("too many modalities");
  ModelParams p;
  p.dim = shape.dim;
  p.user_id = Matrix(shape.n_users, shape.dim);
  p.item_id = Matrix(shape.n_items, shape.dim);
  for (std::size_t dm : shape.feature_dims) {
    if (dm == 0) throw ConfigError("feature dimension must be positive");
    p.user_pref.emplace_back(shape.n_users, shape.dim);
    p.projection.emplace_back(shape.dim, dm);
  }
  return p;
}

ModelShape ModelParams::shape() const {
  ModelShape s{user_id.rows, item_id.rows, dim, {}};
  for (const auto& w : projection) s.feature_dims.push_back(w.cols);
  return s;
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::tensors() {
  std::vector<std::pair<std::string, Matrix*>> out{{"user_id", &user_id}, {"item_id", &item_id}};
  for (std::size_t m = 0; m < user_pref.size(); ++m) {
    out.emplace_back("pref/" + std::to_string(m), &user_pref[m]);
    out.emplace_back("proj/" + std::to_string(m), &projection[m]);
  }
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, t] : const_cast<ModelParams*>(this)->tensors()) out.emplace_back(name, t);
  return out;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, t] : tensors())
    for (double v : t->data)
      if (!std::isfinite(v)) return false;
  return true;
}

ModelParams init_xavier(const ModelShape& shape, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(shape);
  Rng rng(seed);
  for (auto& [name, t] : p.tensors()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(t->rows + t->cols));
    for (double& v : t->data) v = rng.uniform(-bound, bound);
  }
  return p;
}

void check_compatible(const ModelParams& params, std::span<const ModalityFeatures> features) {
  if (features.size() != params.n_modalities())
    throw ConfigError("model has " + std::to_string(params.n_modalities()) +
                      " modalities but " + std::to_string(features.size()) + " were supplied");
  for (std::size_t m = 0; m < features.size(); ++m) {
    if (features[m].matrix.rows != params.item_id.rows)
      throw ConfigError("features of " + features[m].id + " have " +
                        std::to_string(features[m].matrix.rows) + " rows, model has " +
                        std::to_string(params.item_id.rows) + " items");
    if (features[m].dim() != params.projection[m].cols)
      throw ConfigError("feature dimension of " + features[m].id + " does not match the model");
  }
}

AblationMeans compute_ablation_means(const ModelParams& params,
                                     std::span<const ModalityFeatures> features) {
  const auto& k = kernels::active();
  AblationMeans means;
  const std::size_t d = params.dim;
  for (std::size_t m = 0; m < params.n_modalities(); ++m) {
    const Matrix& pref = params.user_pref[m];
    std::vector<double> pbar(d, 0.0);
    for (std::size_t u = 0; u < pref.rows; ++u) k.axpy(1.0, pref.row(u).data(), pbar.data(), d);
    for (double& v : pbar) v /= static_cast<double>(pref.rows);
    std::vector<double> proj(d);
    const Matrix& w = params.projection[m];
    k.gemv(w.data.data(), w.rows, w.cols, features[m].mean_item_vector.data(), proj.data());
    means.pref_mean.push_back(std::move(pbar));
    means.projected_mean.push_back(std::move(proj));
  }
  return means;
}

namespace {

void check_pair(const ModelParams& params, Index u, Index i) {
  if (u >= params.user_id.rows) throw std::out_of_range("user index " + std::to_string(u));
  if (i >= params.item_id.rows) throw std::out_of_range("item index " + std::to_string(i));
}

}  // namespace

double score_masked(const ModelParams& params, std::span<const ModalityFeatures> features, Index u,
                    Index i, ModalityMask keep) {
  check_compatible(params, features);
  check_pair(params, u, i);
  const auto& k = kernels::active();
  const std::size_t d = params.dim;
  const bool any_masked = !(keep == ModalityMask::all(params.n_modalities()));
  const AblationMeans means = any_masked ? compute_ablation_means(params, features) : AblationMeans{};
  double s = k.dot(params.user_id.row(u).data(), params.item_id.row(i).data(), d);
  std::vector<double> q(d);
  for (std::size_t m = 0; m < params.n_modalities(); ++m) {
    if (keep.contains(m)) {
      const Matrix& w = params.projection[m];
      k.gemv(w.data.data(), w.rows, w.cols, features[m].matrix.row(i).data(), q.data());
      s += k.dot(params.user_pref[m].row(u).data(), q.data(), d);
    } else {
      s += k.dot(means.pref_mean[m].data(), means.projected_mean[m].data(), d);
    }
  }
  return s;
}

double score_full(const ModelParams& params, std::span<const ModalityFeatures> features, Index u,
                  Index i) {
  return score_masked(params, features, u, i, ModalityMask::all(params.n_modalities()));
}

Scorer::Scorer(const ModelParams& params, std::span<const ModalityFeatures> features)
    : params_(&params) {
  check_compatible(params, features);
  const auto& k = kernels::active();
  for (std::size_t m = 0; m < params.n_modalities(); ++m) {
    const Matrix& w = params.projection[m];
    Matrix q(params.item_id.rows, params.dim);
    for (std::size_t i = 0; i < q.rows; ++i)
      k.gemv(w.data.data(), w.rows, w.cols, features[m].matrix.row(i).data(), q.row(i).data());
    projected_items_.push_back(std::move(q));
  }
  means_ = compute_ablation_means(params, features);
}

double Scorer::score(Index u, Index i, ModalityMask keep) const {
  check_pair(*params_, u, i);
  const auto& k = kernels::active();
  const std::size_t d = params_->dim;
  double s = k.dot(params_->user_id.row(u).data(), params_->item_id.row(i).data(), d);
  for (std::size_t m = 0; m < params_->n_modalities(); ++m) {
    if (keep.contains(m))
      s += k.dot(params_->user_pref[m].row(u).data(), projected_items_[m].row(i).data(), d);
    else
      s += k.dot(means_.pref_mean[m].data(), means_.projected_mean[m].data(), d);
  }
  return s;
}

void Scorer::score_items(Index u, ModalityMask keep, std::span<double> out) const {
  for (Index i = 0; i < out.size(); ++i) out[i] = score(u, i, keep);
}

// ---------------------------------------------------------------------------

std::vector<double> BatchMargins::delta_for(ModalityMask mask) const {
  std::vector<double> out(size());
  for (std::size_t t = 0; t < size(); ++t) {
    double v = id_margin[t];
    for (std::size_t m = 0; m < n_modalities(); ++m)
      if (mask.contains(m)) v += modality_diff(t, m);
    out[t] = v;
  }
  return out;
}

BatchMargins forward_batch(const ModelParams& params, std::span<const ModalityFeatures> features,
                           const TripleBatch& batch, ModalityMask keep) {
  check_compatible(params, features);
  const auto& k = kernels::active();
  const std::size_t d = params.dim;
  const std::size_t n_mod = params.n_modalities();
  BatchMargins out;
  out.keep = keep;
  out.id_margin.resize(batch.size());
  out.modality_diff = Matrix(batch.size(), n_mod);
  std::vector<double> diff, proj(d);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto [u, a, b] = batch.triples[t];
    check_pair(params, u, a);
    check_pair(params, u, b);
    const double* xu = params.user_id.row(u).data();
    out.id_margin[t] = k.dot(xu, params.item_id.row(a).data(), d) -
                       k.dot(xu, params.item_id.row(b).data(), d);
    for (std::size_t m = 0; m < n_mod; ++m) {
      const Matrix& e = features[m].matrix;
      const Matrix& w = params.projection[m];
      diff.resize(e.cols);
      k.sub(e.row(a).data(), e.row(b).data(), diff.data(), e.cols);
      k.gemv(w.data.data(), w.rows, w.cols, diff.data(), proj.data());
      out.modality_diff(t, m) = k.dot(params.user_pref[m].row(u).data(), proj.data(), d);
    }
  }
  out.delta = out.delta_for(keep);
  return out;
}

MarginGradient::MarginGradient(std::size_t n_triples, std::size_t n_modalities)
    : id_(n_triples, 0.0), modality_(n_triples, n_modalities) {}

void MarginGradient::add(ModalityMask keep, std::span<const double> dloss_ddelta, double scale) {
  if (dloss_ddelta.size() != id_.size())
    throw ConfigError("margin gradient has " + std::to_string(dloss_ddelta.size()) +
                      " entries, batch has " + std::to_string(id_.size()));
  if (scale == 0.0) return;
  for (std::size_t t = 0; t < id_.size(); ++t) {
    const double g = scale * dloss_ddelta[t];
    id_[t] += g;
    for (std::size_t m = 0; m < modality_.cols; ++m)
      if (keep.contains(m)) modality_(t, m) += g;
  }
}

void backward(const ModelParams& params, std::span<const ModalityFeatures> features,
              const TripleBatch& batch, const MarginGradient& dloss, ModelParams& grads) {
  check_compatible(params, features);
  if (!(grads.shape() == params.shape())) throw ConfigError("gradient shape mismatch");
  if (dloss.size() != batch.size() || dloss.n_modalities() != params.n_modalities())
    throw ConfigError("margin gradient does not match the batch");
  const auto& k = kernels::active();
  const std::size_t d = params.dim;
  std::vector<double> diff, proj(d), xdiff(d);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto [u, a, b] = batch.triples[t];
    check_pair(params, u, a);
    check_pair(params, u, b);
    const double gid = dloss.id()[t];
    if (gid != 0.0) {
      // d(delta)/dx_u = x_a - x_b, d/dx_a = x_u, d/dx_b = -x_u
      k.sub(params.item_id.row(a).data(), params.item_id.row(b).data(), xdiff.data(), d);
      k.axpy(gid, xdiff.data(), grads.user_id.row(u).data(), d);
      k.axpy(gid, params.user_id.row(u).data(), grads.item_id.row(a).data(), d);
      k.axpy(-gid, params.user_id.row(u).data(), grads.item_id.row(b).data(), d);
    }
    for (std::size_t m = 0; m < params.n_modalities(); ++m) {
      const double gm = dloss.modality(t, m);
      if (gm == 0.0) continue;
      const Matrix& e = features[m].matrix;
      const Matrix& w = params.projection[m];
      diff.resize(e.cols);
      k.sub(e.row(a).data(), e.row(b).data(), diff.data(), e.cols);
      k.gemv(w.data.data(), w.rows, w.cols, diff.data(), proj.data());
      // d(delta)/dp_u = W (e_a - e_b), d/dW = p_u (e_a - e_b)^T
      k.axpy(gm, proj.data(), grads.user_pref[m].row(u).data(), d);
      k.ger(gm, params.user_pref[m].row(u).data(), w.rows, diff.data(), w.cols,
            grads.projection[m].data.data());
    }
  }
}

void backward(const ModelParams& params, std::span<const ModalityFeatures> features,
              const TripleBatch& batch, ModalityMask keep, std::span<const double> dloss_ddelta,
              ModelParams& grads) {
  MarginGradient g(batch.size(), params.n_modalities());
  g.add(keep, dloss_ddelta);
  backward(params, features, batch, g, grads);
}

// ---------------------------------------------------------------------------

AdamState AdamState::for_params(const ModelParams& params) {
  AdamState s;
  s.first_moment = ModelParams::zeros(params.shape());
  s.second_moment = ModelParams::zeros(params.shape());
  return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
  if (!(grads.shape() == params.shape()) || !(state.first_moment.shape() == params.shape()))
    throw ConfigError("adam: shape mismatch");
  for (const auto& [name, t] : grads.tensors())
    for (double v : t->data)
      if (!std::isfinite(v)) throw DivergenceError("non-finite gradient in tensor " + name);

  ++state.step;
  const double step = static_cast<double>(state.step);
  const kernels::AdamCoeffs c{lr,
                              state.beta1,
                              state.beta2,
                              state.eps,
                              1.0 - std::pow(state.beta1, step),
                              1.0 - std::pow(state.beta2, step)};
  const auto& k = kernels::active();
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m1 = state.first_moment.tensors();
  auto m2 = state.second_moment.tensors();
  for (std::size_t n = 0; n < p.size(); ++n) {
    Matrix& t = *p[n].second;
    k.adam(t.data.data(), g[n].second->data.data(), m1[n].second->data.data(),
           m2[n].second->data.data(), t.size(), c);
    for (double v : t.data)
      if (!std::isfinite(v)) throw DivergenceError("non-finite parameter in tensor " + p[n].first);
  }
}

// ---------------------------------------------------------------------------

BridgeResult gradient_bridge(double id_margin, std::span<const double> modality_diff, double h) {
  auto loss = [&](std::span<const double> s) {
    double total = id_margin;
    for (double v : s) total += v;
    return neg_log_sigmoid(total);
  };
  double total = id_margin;
  for (double v : modality_diff) total += v;

  BridgeResult r;
  // 1 / (1 + e^{total}) == sigmoid(-total)
  r.bridge = sigmoid(-total);
  r.closed_form.assign(modality_diff.size(), -r.bridge);
  std::vector<double> s(modality_diff.begin(), modality_diff.end());
  for (std::size_t m = 0; m < s.size(); ++m) {
    const double orig = s[m];
    s[m] = orig + h;
    const double up = loss(s);
    s[m] = orig - h;
    const double down = loss(s);
    s[m] = orig;
    r.finite_difference.push_back((up - down) / (2.0 * h));
  }
  return r;
}

BridgeResult gradient_bridge(const ModelParams& params, std::span<const ModalityFeatures> features,
                             const Triple& triple, double h) {
  TripleBatch batch{{triple}, TripleKind::bpr};
  const BatchMargins margins =
      forward_batch(params, features, batch, ModalityMask::all(params.n_modalities()));
  return gradient_bridge(margins.id_margin[0], margins.modality_diff.row(0), h);
}

}  // namespace ckd

#pragma once
// Implicit-feedback interaction data: loading, k-core filtering, per-user
// splitting, index maps, modality feature matrices and triple sampling.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "ckd/rng.hpp"
#include "ckd/tensor.hpp"

namespace ckd {

using Index = std::uint32_t;

struct Interaction {
  std::string user;
  std::string item;
  friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Parses "user_id<TAB>item_id" lines (any run of spaces/tabs separates the
// two fields). Duplicate pairs are dropped, first occurrence kept; file order
// is otherwise preserved. Blank lines are skipped.
std::vector<Interaction> parse_interactions(std::istream& in);
std::vector<Interaction> load_interactions(const std::filesystem::path& path);
void save_interactions(const std::filesystem::path& path, const std::vector<Interaction>& rows);

// Iteratively drops users and items with fewer than `min_core` interactions
// until every survivor has at least `min_core`. min_core <= 1 is a no-op.
std::vector<Interaction> five_core_filter(const std::vector<Interaction>& raw,
                                          std::size_t min_core = 5);

// External id -> dense index, assigned in first-appearance order.
class IndexMap {
 public:
  Index add(const std::string& id);
  Index at(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.contains(id); }
  const std::string& id(Index i) const { return ids_.at(i); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  void save(const std::filesystem::path& path) const;
  static IndexMap load(const std::filesystem::path& path);

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, Index> index_;
};

enum class Split { train, val, test };

struct InteractionData {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  // Per-user sorted item lists; pairwise disjoint per user.
  std::vector<std::vector<Index>> train;
  std::vector<std::vector<Index>> val;
  std::vector<std::vector<Index>> test;
  IndexMap users;
  IndexMap items;

  const std::vector<Index>& items_of(Index u, Split s) const;
  // Any split (train, val or test).
  bool observed(Index u, Index i) const;
  std::size_t count(Split s) const;

  // Writes train.tsv / val.tsv / test.tsv (external ids) plus users.map and
  // items.map into `dir`.
  void save(const std::filesystem::path& dir) const;
  static InteractionData load(const std::filesystem::path& dir);
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;  // test gets the remainder
};

// Per user: seeded shuffle of the user's items, cut at floor(train*n) and
// floor((train+val)*n). If val or test would be empty, one item moves over
// from train. Users with fewer than 3 items are rejected.
// `item_catalog`, when given, fixes the item index space up front (items with
// no interactions keep their catalog index); otherwise items are indexed in
// first-appearance order.
InteractionData split(const std::vector<Interaction>& interactions, SplitRatios ratios,
                      std::uint64_t seed, const IndexMap* item_catalog = nullptr);

struct ModalityFeatures {
  std::string id;
  Matrix matrix;  // n_items x d_m
  std::vector<double> mean_item_vector;

  std::size_t dim() const { return matrix.cols; }
};

std::vector<double> compute_feature_means(const Matrix& features);
ModalityFeatures make_modality(std::string id, Matrix matrix);

// "n_items d_m" header, then one row of d_m floats per dense item index.
ModalityFeatures load_features(const std::filesystem::path& path, std::string id,
                               std::size_t expected_items);
void save_features(const std::filesystem::path& path, const Matrix& features);

struct Triple {
  Index u;
  Index a;  // positive item (bpr) or first random item (generic)
  Index b;  // negative item (bpr) or second random item (generic)
  friend bool operator==(const Triple&, const Triple&) = default;
};

enum class TripleKind { bpr, generic };

struct TripleBatch {
  std::vector<Triple> triples;
  TripleKind kind = TripleKind::bpr;
  std::size_t size() const { return triples.size(); }
};

inline constexpr int kNegativeSampleCap = 1000;

// u uniform over users, i uniform over train(u), j rejection-sampled until it
// is outside every split of u.
TripleBatch sample_bpr_batch(const InteractionData& data, std::size_t batch_size, Rng& rng);
// u uniform over users; j, k uniform over items with j != k.
TripleBatch sample_generic_batch(const InteractionData& data, std::size_t batch_size, Rng& rng);

}  // namespace ckd

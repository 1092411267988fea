#include "ckd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "ckd/errors.hpp"
#include "ckd/format.hpp"

namespace ckd {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t k = 0;
  while (k < line.size()) {
    while (k < line.size() && (line[k] == ' ' || line[k] == '\t')) ++k;
    const std::size_t start = k;
    while (k < line.size() && line[k] != ' ' && line[k] != '\t') ++k;
    if (k > start) out.push_back(line.substr(start, k - start));
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

struct PairHash {
  std::size_t operator()(const std::pair<std::string, std::string>& p) const {
    return std::hash<std::string>{}(p.first) * 31u ^ std::hash<std::string>{}(p.second);
  }
};

}  // namespace

std::vector<Interaction> parse_interactions(std::istream& in) {
  std::vector<Interaction> rows;
  std::unordered_set<std::pair<std::string, std::string>, PairHash> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto fields = split_fields(t);
    if (fields.size() != 2)
      throw DataError("parse error at line " + std::to_string(line_no) +
                      ": expected \"user_id<TAB>item_id\"");
    if (seen.emplace(fields[0], fields[1]).second) rows.push_back({fields[0], fields[1]});
  }
  if (rows.empty()) throw DataError("interaction file is empty");
  return rows;
}

std::vector<Interaction> load_interactions(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_interactions(in);
}

void save_interactions(const std::filesystem::path& path, const std::vector<Interaction>& rows) {
  auto out = open_out(path);
  for (const auto& r : rows) out << r.user << '\t' << r.item << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Interaction> five_core_filter(const std::vector<Interaction>& raw,
                                          std::size_t min_core) {
  if (raw.empty()) throw DataError("cannot filter an empty interaction list");
  if (min_core <= 1) return raw;

  IndexMap users, items;
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(raw.size());
  for (const auto& r : raw) edges.emplace_back(users.add(r.user), items.add(r.item));

  std::vector<std::vector<std::size_t>> user_edges(users.size()), item_edges(items.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    user_edges[edges[e].first].push_back(e);
    item_edges[edges[e].second].push_back(e);
  }
  std::vector<std::size_t> user_deg(users.size()), item_deg(items.size());
  for (std::size_t u = 0; u < users.size(); ++u) user_deg[u] = user_edges[u].size();
  for (std::size_t i = 0; i < items.size(); ++i) item_deg[i] = item_edges[i].size();

  std::vector<bool> edge_alive(edges.size(), true);
  std::vector<bool> user_dead(users.size(), false), item_dead(items.size(), false);
  // Queue entries: (is_item, index).
  std::queue<std::pair<bool, Index>> pending;
  for (Index u = 0; u < users.size(); ++u)
    if (user_deg[u] < min_core) pending.emplace(false, u);
  for (Index i = 0; i < items.size(); ++i)
    if (item_deg[i] < min_core) pending.emplace(true, i);

  while (!pending.empty()) {
    const auto [is_item, v] = pending.front();
    pending.pop();
    if (is_item) {
      if (item_dead[v]) continue;
      item_dead[v] = true;
      for (std::size_t e : item_edges[v]) {
        if (!edge_alive[e]) continue;
        edge_alive[e] = false;
        const Index u = edges[e].first;
        if (--user_deg[u] < min_core && !user_dead[u]) pending.emplace(false, u);
      }
    } else {
      if (user_dead[v]) continue;
      user_dead[v] = true;
      for (std::size_t e : user_edges[v]) {
        if (!edge_alive[e]) continue;
        edge_alive[e] = false;
        const Index i = edges[e].second;
        if (--item_deg[i] < min_core && !item_dead[i]) pending.emplace(true, i);
      }
    }
  }

  std::vector<Interaction> out;
  for (std::size_t e = 0; e < edges.size(); ++e)
    if (edge_alive[e]) out.push_back(raw[e]);
  if (out.empty())
    throw DataError("dataset vanishes under " + std::to_string(min_core) + "-core filter");
  return out;
}

// ---------------------------------------------------------------------------

Index IndexMap::add(const std::string& id) {
  const auto [it, inserted] = index_.try_emplace(id, static_cast<Index>(ids_.size()));
  if (inserted) ids_.push_back(id);
  return it->second;
}

Index IndexMap::at(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown id: " + id);
  return it->second;
}

void IndexMap::save(const std::filesystem::path& path) const {
  auto out = open_out(path);
  for (std::size_t k = 0; k < ids_.size(); ++k) out << ids_[k] << '\t' << k << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

IndexMap IndexMap::load(const std::filesystem::path& path) {
  auto in = open_in(path);
  IndexMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(trim(line));
    std::size_t idx = 0;
    if (fields.size() != 2 ||
        std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), idx).ec !=
            std::errc{})
      throw DataError(path.string() + ": bad index-map line " + std::to_string(line_no));
    if (idx != map.size())
      throw DataError(path.string() + ": dense indices must be consecutive from 0 (line " +
                      std::to_string(line_no) + ")");
    map.add(fields[0]);
  }
  return map;
}

// ---------------------------------------------------------------------------

const std::vector<Index>& InteractionData::items_of(Index u, Split s) const {
  switch (s) {
    case Split::train: return train.at(u);
    case Split::val: return val.at(u);
    case Split::test: return test.at(u);
  }
  return train.at(u);
}

bool InteractionData::observed(Index u, Index i) const {
  return std::binary_search(train[u].begin(), train[u].end(), i) ||
         std::binary_search(val[u].begin(), val[u].end(), i) ||
         std::binary_search(test[u].begin(), test[u].end(), i);
}

std::size_t InteractionData::count(Split s) const {
  std::size_t n = 0;
  for (Index u = 0; u < n_users; ++u) n += items_of(u, s).size();
  return n;
}

void InteractionData::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, Split> files[] = {
      {"train.tsv", Split::train}, {"val.tsv", Split::val}, {"test.tsv", Split::test}};
  for (const auto& [name, s] : files) {
    auto out = open_out(dir / name);
    for (Index u = 0; u < n_users; ++u)
      for (Index i : items_of(u, s)) out << users.id(u) << '\t' << items.id(i) << '\n';
    if (!out) throw IoError("write failed: " + (dir / name).string());
  }
  users.save(dir / "users.map");
  items.save(dir / "items.map");
}

InteractionData InteractionData::load(const std::filesystem::path& dir) {
  InteractionData d;
  d.users = IndexMap::load(dir / "users.map");
  d.items = IndexMap::load(dir / "items.map");
  d.n_users = d.users.size();
  d.n_items = d.items.size();
  d.train.assign(d.n_users, {});
  d.val.assign(d.n_users, {});
  d.test.assign(d.n_users, {});
  const std::pair<const char*, std::vector<std::vector<Index>>*> files[] = {
      {"train.tsv", &d.train}, {"val.tsv", &d.val}, {"test.tsv", &d.test}};
  for (const auto& [name, lists] : files) {
    auto in = open_in(dir / name);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      const auto fields = split_fields(trim(line));
      if (fields.size() != 2)
        throw DataError((dir / name).string() + ": parse error at line " + std::to_string(line_no));
      (*lists)[d.users.at(fields[0])].push_back(d.items.at(fields[1]));
    }
  }
  for (Index u = 0; u < d.n_users; ++u) {
    std::sort(d.train[u].begin(), d.train[u].end());
    std::sort(d.val[u].begin(), d.val[u].end());
    std::sort(d.test[u].begin(), d.test[u].end());
    if (d.train[u].empty()) throw DataError("user " + d.users.id(u) + " has no train items");
  }
  return d;
}

InteractionData split(const std::vector<Interaction>& interactions, SplitRatios ratios,
                      std::uint64_t seed, const IndexMap* item_catalog) {
  if (ratios.train <= 0.0 || ratios.val < 0.0 || ratios.train + ratios.val > 1.0)
    throw ConfigError("split ratios must satisfy 0 < train, 0 <= val, train + val <= 1");
  InteractionData d;
  if (item_catalog != nullptr) d.items = *item_catalog;
  std::vector<std::vector<Index>> per_user;
  for (const auto& r : interactions) {
    const Index u = d.users.add(r.user);
    const Index i = item_catalog != nullptr ? d.items.at(r.item) : d.items.add(r.item);
    if (u >= per_user.size()) per_user.resize(u + 1);
    per_user[u].push_back(i);
  }
  d.n_users = d.users.size();
  d.n_items = d.items.size();
  d.train.resize(d.n_users);
  d.val.resize(d.n_users);
  d.test.resize(d.n_users);

  Rng rng(seed);
  for (Index u = 0; u < d.n_users; ++u) {
    auto items = per_user[u];
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    const std::size_t n = items.size();
    if (n < 3)
      throw DataError("user " + d.users.id(u) + " has " + std::to_string(n) +
                      " interactions; at least 3 are needed for train/val/test");
    rng.shuffle(items.begin(), items.end());
    // The epsilon absorbs representation error in products like 0.9 * 30.
    std::size_t train_end = static_cast<std::size_t>(std::floor(ratios.train * n + 1e-9));
    std::size_t val_end =
        static_cast<std::size_t>(std::floor((ratios.train + ratios.val) * n + 1e-9));
    val_end = std::min(val_end, n);
    train_end = std::min(train_end, val_end);
    if (val_end == train_end) --train_end;  // move one train item into val
    if (val_end == n) {                     // move one item into test
      --val_end;
      if (val_end == train_end) --train_end;
    }
    d.train[u].assign(items.begin(), items.begin() + train_end);
    d.val[u].assign(items.begin() + train_end, items.begin() + val_end);
    d.test[u].assign(items.begin() + val_end, items.end());
    std::sort(d.train[u].begin(), d.train[u].end());
    std::sort(d.val[u].begin(), d.val[u].end());
    std::sort(d.test[u].begin(), d.test[u].end());
  }
  return d;
}

// ---------------------------------------------------------------------------

std::vector<double> compute_feature_means(const Matrix& features) {
  if (features.rows == 0) throw DataError("cannot average an empty feature matrix");
  std::vector<double> mean(features.cols, 0.0);
  for (std::size_t r = 0; r < features.rows; ++r) {
    const auto row = features.row(r);
    for (std::size_t c = 0; c < features.cols; ++c) mean[c] += row[c];
  }
  for (double& v : mean) v /= static_cast<double>(features.rows);
  return mean;
}

ModalityFeatures make_modality(std::string id, Matrix matrix) {
  ModalityFeatures f;
  f.id = std::move(id);
  f.mean_item_vector = compute_feature_means(matrix);
  f.matrix = std::move(matrix);
  return f;
}

ModalityFeatures load_features(const std::filesystem::path& path, std::string id,
                               std::size_t expected_items) {
  auto in = open_in(path);
  std::size_t rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows == 0 || cols == 0)
    throw DataError(path.string() + ": bad header, expected \"n_items d_m\"");
  if (expected_items != 0 && rows != expected_items)
    throw DataError(path.string() + ": has " + std::to_string(rows) + " rows but dataset has " +
                    std::to_string(expected_items) + " items");
  Matrix m(rows, cols);
  std::string token;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (!(in >> token))
      throw DataError(path.string() + ": truncated at row " + std::to_string(k / cols));
    double v = 0.0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size() || !std::isfinite(v))
      throw DataError(path.string() + ": bad value '" + token + "' at row " +
                      std::to_string(k / cols));
    m.data[k] = v;
  }
  if (in >> token) throw DataError(path.string() + ": trailing data after " + std::to_string(rows) + " rows");
  return make_modality(std::move(id), std::move(m));
}

void save_features(const std::filesystem::path& path, const Matrix& features) {
  auto out = open_out(path);
  out << features.rows << ' ' << features.cols << '\n';
  for (std::size_t r = 0; r < features.rows; ++r) {
    const auto row = features.row(r);
    for (std::size_t c = 0; c < features.cols; ++c) {
      if (c) out << ' ';
      out << format_double(row[c]);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------

TripleBatch sample_bpr_batch(const InteractionData& data, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (data.n_users == 0 || data.n_items == 0) throw DataError("empty dataset");
  TripleBatch batch;
  batch.kind = TripleKind::bpr;
  batch.triples.reserve(batch_size);
  for (std::size_t t = 0; t < batch_size; ++t) {
    const auto u = static_cast<Index>(rng.index(data.n_users));
    const auto& pos = data.train[u];
    if (pos.empty()) throw DataError("user " + data.users.id(u) + " has no train items");
    const Index i = pos[rng.index(pos.size())];
    Index j = 0;
    int attempts = 0;
    do {
      if (++attempts > kNegativeSampleCap)
        throw DataError("no negative item found for user " + data.users.id(u) + " after " +
                        std::to_string(kNegativeSampleCap) + " attempts");
      j = static_cast<Index>(rng.index(data.n_items));
    } while (data.observed(u, j));
    batch.triples.push_back({u, i, j});
  }
  return batch;
}

TripleBatch sample_generic_batch(const InteractionData& data, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (data.n_items < 2) throw DataError("generic sampling needs at least 2 items");
  TripleBatch batch;
  batch.kind = TripleKind::generic;
  batch.triples.reserve(batch_size);
  for (std::size_t t = 0; t < batch_size; ++t) {
    const auto u = static_cast<Index>(rng.index(data.n_users));
    const auto j = static_cast<Index>(rng.index(data.n_items));
    Index k = j;
    while (k == j) k = static_cast<Index>(rng.index(data.n_items));
    batch.triples.push_back({u, j, k});
  }
  return batch;
}

}  // namespace ckd

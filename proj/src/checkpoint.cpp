#include "ckd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ckd/errors.hpp"

namespace ckd {
namespace {

constexpr const char* kFormat = "ckd-checkpoint-v1";

void append_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= std::uint64_t{static_cast<unsigned char>(p[b])} << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string encode_checkpoint(const ModelParams& params, const CheckpointMeta& meta) {
  if (meta.modality_ids.size() != params.n_modalities())
    throw ConfigError("checkpoint: modality id count does not match the model");
  const ModelShape shape = params.shape();
  nlohmann::json header;
  header["format"] = kFormat;
  header["byte_order"] = "little";
  header["n_users"] = shape.n_users;
  header["n_items"] = shape.n_items;
  header["dim"] = shape.dim;
  header["modalities"] = nlohmann::json::array();
  for (std::size_t m = 0; m < shape.feature_dims.size(); ++m)
    header["modalities"].push_back({{"id", meta.modality_ids[m]}, {"dim", shape.feature_dims[m]}});
  header["seed"] = meta.seed;
  header["hyperparameters"] = meta.hyperparameters;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : params.tensors())
    header["tensors"].push_back({{"name", name}, {"rows", t->rows}, {"cols", t->cols}});

  std::string out = header.dump();
  out.push_back('\n');
  for (const auto& [name, t] : params.tensors())
    for (double v : t->data) append_le(out, v);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw DataError("checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (header.value("format", "") != kFormat) throw DataError("checkpoint: unknown format");

  Checkpoint ck;
  ModelShape shape;
  shape.n_users = header.at("n_users").get<std::size_t>();
  shape.n_items = header.at("n_items").get<std::size_t>();
  shape.dim = header.at("dim").get<std::size_t>();
  for (const auto& m : header.at("modalities")) {
    ck.meta.modality_ids.push_back(m.at("id").get<std::string>());
    shape.feature_dims.push_back(m.at("dim").get<std::size_t>());
  }
  ck.meta.seed = header.at("seed").get<std::uint64_t>();
  ck.meta.hyperparameters = header.value("hyperparameters", nlohmann::json::object());
  ck.params = ModelParams::zeros(shape);

  auto tensors = ck.params.tensors();
  const auto& table = header.at("tensors");
  if (table.size() != tensors.size()) throw DataError("checkpoint: tensor count mismatch");
  std::size_t offset = nl + 1;
  for (std::size_t n = 0; n < tensors.size(); ++n) {
    Matrix& t = *tensors[n].second;
    if (table[n].at("name") != tensors[n].first || table[n].at("rows") != t.rows ||
        table[n].at("cols") != t.cols)
      throw DataError("checkpoint: tensor table does not match shapes at " + tensors[n].first);
    if (bytes.size() < offset + 8 * t.size()) throw DataError("checkpoint: truncated tensor data");
    for (std::size_t k = 0; k < t.size(); ++k) t.data[k] = read_le(bytes.data() + offset + 8 * k);
    offset += 8 * t.size();
  }
  if (offset != bytes.size()) throw DataError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const CheckpointMeta& meta) {
  const std::string bytes = encode_checkpoint(params, meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace ckd

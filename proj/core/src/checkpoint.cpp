#include "lsm/checkpoint.hpp"

#include "json_io.hpp"
#include "lsm/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

namespace lsm {

namespace {

constexpr char kMagic[8] = {'L', 'S', 'M', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool read_le(std::istream& in, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return true;
}

void byteswap_floats(std::vector<char>& raw) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i + 4 <= raw.size(); i += 4) {
      std::swap(raw[i], raw[i + 3]);
      std::swap(raw[i + 1], raw[i + 2]);
    }
  }
}

// Ordered (name, tensor) pairs: parameters first, then floating buffers.
std::vector<std::pair<std::string, torch::Tensor>> state_arrays(Detector& model) {
  std::vector<std::pair<std::string, torch::Tensor>> arrays;
  for (const auto& p : model->named_parameters()) arrays.emplace_back(p.key(), p.value());
  for (const auto& b : model->named_buffers()) {
    if (b.value().is_floating_point()) arrays.emplace_back(b.key(), b.value());
  }
  return arrays;
}

struct ParsedHeader {
  detail::json header;
  std::uint64_t data_start = 0;
};

ParsedHeader read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw Error(errc::kCorruptCheckpoint, path.string() + ": bad magic");
  }
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  if (!read_le(in, version) || !read_le(in, header_len)) {
    throw Error(errc::kCorruptCheckpoint, path.string() + ": truncated preamble");
  }
  if (version != kCheckpointVersion) {
    throw Error(errc::kCheckpointMismatch,
                path.string() + ": unsupported version " + std::to_string(version));
  }
  std::string text(header_len, '\0');
  if (header_len > (1ull << 30) || !in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw Error(errc::kCorruptCheckpoint, path.string() + ": truncated header");
  }
  ParsedHeader parsed;
  try {
    parsed.header = detail::json::parse(text);
  } catch (const detail::json::exception& e) {
    throw Error(errc::kCorruptCheckpoint, path.string() + ": unreadable header");
  }
  parsed.data_start = 8 + 4 + 8 + header_len;
  return parsed;
}

}  // namespace

void save_checkpoint(Detector& model, const std::filesystem::path& path,
                     const std::string& meta_json) {
  detail::json header;
  header["version"] = kCheckpointVersion;
  header["config"] = model->config();
  header["meta"] = detail::json::parse(meta_json);
  header["arrays"] = detail::json::array();

  std::vector<torch::Tensor> data;
  std::uint64_t offset = 0;
  for (auto& [name, tensor] : state_arrays(model)) {
    auto t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    const std::uint64_t nbytes = static_cast<std::uint64_t>(t.numel()) * 4;
    header["arrays"].push_back(
        {{"name", name}, {"shape", t.sizes().vec()}, {"dtype", "f32"}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
    data.push_back(std::move(t));
  }
  header["data_bytes"] = offset;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(errc::kIo, "cannot write " + path.string());
  out.write(kMagic, 8);
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : data) {
    std::vector<char> raw(static_cast<std::size_t>(t.numel()) * 4);
    std::memcpy(raw.data(), t.data_ptr<float>(), raw.size());
    byteswap_floats(raw);
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  }
  if (!out) throw Error(errc::kIo, "write failed: " + path.string());
}

Detector load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kIo, "cannot open " + path.string());
  const auto file_size = std::filesystem::file_size(path);
  auto parsed = read_header(in, path);
  const auto& header = parsed.header;

  ModelConfig cfg;
  std::uint64_t data_bytes = 0;
  try {
    cfg = header.at("config").get<ModelConfig>();
    data_bytes = header.at("data_bytes").get<std::uint64_t>();
  } catch (const detail::json::exception&) {
    throw Error(errc::kCorruptCheckpoint, path.string() + ": header lacks config or data size");
  }
  if (file_size < parsed.data_start + data_bytes) {
    throw Error(errc::kCorruptCheckpoint, path.string() + ": truncated data (" +
                                              std::to_string(file_size) + " bytes)");
  }

  auto model = build_model(cfg);
  std::map<std::string, torch::Tensor> targets;
  for (auto& [name, tensor] : state_arrays(model)) targets.emplace(name, tensor);

  torch::NoGradGuard no_grad;
  std::size_t seen = 0;
  try {
    for (const auto& entry : header.at("arrays")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      auto it = targets.find(name);
      if (it == targets.end()) {
        throw Error(errc::kCheckpointMismatch, path.string() + ": unknown array " + name);
      }
      if (it->second.sizes().vec() != shape || entry.at("dtype").get<std::string>() != "f32") {
        throw Error(errc::kCheckpointMismatch, path.string() + ": shape/dtype mismatch for " + name);
      }
      const auto nbytes = static_cast<std::size_t>(it->second.numel()) * 4;
      if (offset + nbytes > data_bytes) {
        throw Error(errc::kCorruptCheckpoint, path.string() + ": array " + name + " out of bounds");
      }
      std::vector<char> raw(nbytes);
      in.seekg(static_cast<std::streamoff>(parsed.data_start + offset));
      if (!in.read(raw.data(), static_cast<std::streamsize>(nbytes))) {
        throw Error(errc::kCorruptCheckpoint, path.string() + ": short read for " + name);
      }
      byteswap_floats(raw);
      auto src = torch::from_blob(raw.data(), it->second.sizes(), torch::kFloat32);
      it->second.copy_(src);
      ++seen;
    }
  } catch (const detail::json::exception&) {
    throw Error(errc::kCorruptCheckpoint, path.string() + ": malformed array manifest");
  }
  if (seen != targets.size()) {
    throw Error(errc::kCheckpointMismatch, path.string() + ": checkpoint has " +
                                               std::to_string(seen) + " arrays, model needs " +
                                               std::to_string(targets.size()));
  }
  return model;
}

std::string read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kIo, "cannot open " + path.string());
  auto parsed = read_header(in, path);
  auto it = parsed.header.find("meta");
  return it == parsed.header.end() ? std::string("{}") : it->dump();
}

}  // namespace lsm

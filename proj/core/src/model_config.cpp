#include "lsm/model_config.hpp"

#include "json_io.hpp"
#include "lsm/error.hpp"

#include <fstream>
#include <sstream>

namespace lsm {

namespace detail {

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(errc::kInvalidConfig, std::string("missing field '") + key + "'");
  return *it;
}

}  // namespace detail

using detail::json;
using detail::require;

void to_json(json& j, const ModelConfig& c) {
  j = json{{"num_classes", c.num_classes},
           {"class_names", c.class_names},
           {"input_size", c.input_size},
           {"stem_channels", c.stem_channels},
           {"rfa_channels", c.rfa_channels},
           {"stage_widths", c.stage_widths},
           {"stage_depths", c.stage_depths},
           {"neck_depth", c.neck_depth},
           {"head_strides", c.head_strides},
           {"reg_max", c.reg_max},
           {"head_box_channels", c.head_box_channels},
           {"head_cls_channels", c.head_cls_channels},
           {"lae_groups", c.lae_groups},
           {"lae_kernel", c.lae_kernel},
           {"msfm_reduction", c.msfm_reduction},
           {"rfa_kernel", c.rfa_kernel},
           {"use_rfablock", c.use_rfablock},
           {"use_lae", c.use_lae},
           {"use_msfm", c.use_msfm},
           {"lae_enable_le", c.lae_enable_le},
           {"lae_enable_ae", c.lae_enable_ae},
           {"lae_enable_dm", c.lae_enable_dm},
           {"msfm_enable_spatial", c.msfm_enable_spatial},
           {"msfm_enable_channel", c.msfm_enable_channel},
           {"seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
  try {
    require(j, "num_classes").get_to(c.num_classes);
    require(j, "class_names").get_to(c.class_names);
    require(j, "input_size").get_to(c.input_size);
    require(j, "stem_channels").get_to(c.stem_channels);
    require(j, "rfa_channels").get_to(c.rfa_channels);
    require(j, "stage_widths").get_to(c.stage_widths);
    require(j, "stage_depths").get_to(c.stage_depths);
    require(j, "neck_depth").get_to(c.neck_depth);
    require(j, "head_strides").get_to(c.head_strides);
    require(j, "reg_max").get_to(c.reg_max);
    require(j, "head_box_channels").get_to(c.head_box_channels);
    require(j, "head_cls_channels").get_to(c.head_cls_channels);
    require(j, "lae_groups").get_to(c.lae_groups);
    require(j, "lae_kernel").get_to(c.lae_kernel);
    require(j, "msfm_reduction").get_to(c.msfm_reduction);
    require(j, "rfa_kernel").get_to(c.rfa_kernel);
    require(j, "use_rfablock").get_to(c.use_rfablock);
    require(j, "use_lae").get_to(c.use_lae);
    require(j, "use_msfm").get_to(c.use_msfm);
    require(j, "lae_enable_le").get_to(c.lae_enable_le);
    require(j, "lae_enable_ae").get_to(c.lae_enable_ae);
    require(j, "lae_enable_dm").get_to(c.lae_enable_dm);
    require(j, "msfm_enable_spatial").get_to(c.msfm_enable_spatial);
    require(j, "msfm_enable_channel").get_to(c.msfm_enable_channel);
    require(j, "seed").get_to(c.seed);
  } catch (const json::exception& e) {
    throw Error(errc::kInvalidConfig, std::string("model config: ") + e.what());
  }
}

namespace detail {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(errc::kInvalidConfig, path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(errc::kIo, "cannot write " + path.string());
  out << text;
}

}  // namespace detail

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(errc::kInvalidConfig, msg); };
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (!class_names.empty() && static_cast<std::int64_t>(class_names.size()) != num_classes) {
    fail("class_names has " + std::to_string(class_names.size()) + " entries, expected " +
         std::to_string(num_classes));
  }
  if (input_size < 32 || input_size % 32 != 0) fail("input_size must be a positive multiple of 32");
  for (std::size_t i = 0; i < head_strides.size(); ++i) {
    if (head_strides[i] < 1 || input_size % head_strides[i] != 0) {
      fail("head stride " + std::to_string(head_strides[i]) + " does not divide input_size");
    }
    if (i > 0 && head_strides[i] <= head_strides[i - 1]) fail("head strides must increase");
  }
  // The backbone halves resolution once in the stem and once per stage.
  if (head_strides != std::array<std::int64_t, 4>{4, 8, 16, 32}) {
    fail("head_strides must be [4, 8, 16, 32]");
  }
  if (reg_max < 2) fail("reg_max must be >= 2");
  for (auto d : stage_depths) {
    if (d < 1) fail("stage depths must be >= 1");
  }
  if (neck_depth < 0) fail("neck_depth must be >= 0");
  if (stem_channels < 1 || rfa_channels < 1 || head_box_channels < 1 || head_cls_channels < 1) {
    fail("widths must be >= 1");
  }
  const std::int64_t g = lae_groups;
  if (g < 1) fail("lae_groups must be >= 1");
  std::int64_t prev = rfa_channels;
  for (auto w : stage_widths) {
    if (w < 8 || w % 4 != 0) fail("stage widths must be multiples of 4 and >= 8");
    if (use_lae && (prev % g != 0 || w % g != 0)) fail("stage widths must be divisible by lae_groups");
    prev = w;
  }
  if (lae_kernel < 1 || lae_kernel % 2 == 0 || rfa_kernel < 1 || rfa_kernel % 2 == 0) {
    fail("kernel sizes must be odd");
  }
  if (msfm_reduction < 1) fail("msfm_reduction must be >= 1");
}

std::string ModelConfig::to_json() const {
  detail::json j = *this;
  return j.dump(2) + "\n";
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  detail::json j;
  try {
    j = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw Error(errc::kInvalidConfig, e.what());
  }
  return j.get<ModelConfig>();
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  return detail::read_json_file(path).get<ModelConfig>();
}

void ModelConfig::save(const std::filesystem::path& path) const {
  detail::write_text_file(path, to_json());
}

}  // namespace lsm

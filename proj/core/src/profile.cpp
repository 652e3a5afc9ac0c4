#include "lsm/profile.hpp"

#include "lsm/layers.hpp"

#include <json.hpp>

#include <cstdio>
#include <map>
#include <sstream>

namespace lsm {

namespace {

// Parameter name -> breakdown row: the top-level module, or neck.<block>.
std::string row_key(const std::string& name) {
  const auto first = name.find('.');
  const std::string head = name.substr(0, first);
  if (head == "neck" && first != std::string::npos) {
    const auto second = name.find('.', first + 1);
    return name.substr(0, second);
  }
  return head;
}

MacRecorder record_forward(Detector& model, std::int64_t input_size) {
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  // The topology check requires the configured size; profiling at another
  // size goes through a copy of the config.
  Detector target = model;
  if (input_size != model->config().input_size) {
    ModelConfig cfg = model->config();
    cfg.input_size = input_size;
    target = Detector(cfg);
    target->eval();
  }
  auto dtype = model->parameters().front().scalar_type();
  auto x = torch::zeros({1, 3, input_size, input_size}, torch::TensorOptions().dtype(dtype));
  MacRecorder recorder;
  {
    MacRecorderGuard guard(recorder);
    target->forward(x);
  }
  if (was_training) model->train();
  return recorder;
}

}  // namespace

std::int64_t count_params(Detector& model) {
  std::int64_t n = 0;
  for (const auto& p : model->parameters()) n += p.numel();
  return n;
}

std::int64_t estimate_flops(Detector& model, std::int64_t input_size) {
  return 2 * record_forward(model, input_size).total();
}

ProfileReport profile(Detector& model, std::int64_t input_size) {
  ProfileReport report;
  report.input_size = input_size;
  std::map<std::string, ProfileRow> rows;
  std::vector<std::string> order;
  auto row = [&](const std::string& key) -> ProfileRow& {
    auto it = rows.find(key);
    if (it == rows.end()) {
      order.push_back(key);
      it = rows.emplace(key, ProfileRow{key, 0, 0}).first;
    }
    return it->second;
  };
  for (const auto& item : model->named_parameters()) {
    row(row_key(item.key())).params += item.value().numel();
  }
  const auto recorder = record_forward(model, input_size);
  for (const auto& [scope, macs] : recorder.by_scope()) row(scope).flops += 2 * macs;
  for (const auto& key : order) {
    report.rows.push_back(rows.at(key));
    report.params += rows.at(key).params;
    report.flops += rows.at(key).flops;
  }
  return report;
}

ProfileReport profile(const ModelConfig& cfg) {
  auto model = build_model(cfg);
  return profile(model, cfg.input_size);
}

std::string ProfileReport::to_table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-14s %14s %14s\n", "module", "params", "GFLOPs");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-14s %14lld %14.4f\n", r.module.c_str(),
                  static_cast<long long>(r.params), static_cast<double>(r.flops) / 1e9);
    os << line;
  }
  std::snprintf(line, sizeof(line), "%-14s %14lld %14.4f\n", "total", static_cast<long long>(params),
                gflops());
  os << line;
  std::snprintf(line, sizeof(line), "params %.3f M, %.2f GFLOPs at %lldx%lld\n", params_m(),
                gflops(), static_cast<long long>(input_size), static_cast<long long>(input_size));
  os << line;
  return os.str();
}

std::string ProfileReport::to_json() const {
  nlohmann::json j;
  j["input_size"] = input_size;
  j["params"] = params;
  j["flops"] = flops;
  j["params_m"] = params_m();
  j["gflops"] = gflops();
  j["modules"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["modules"].push_back({{"module", r.module}, {"params", r.params}, {"flops", r.flops}});
  }
  return j.dump(2) + "\n";
}

}  // namespace lsm

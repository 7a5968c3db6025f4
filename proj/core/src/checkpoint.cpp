#include "cxr/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cxr/error.hpp"
#include "cxr/npy.hpp"

namespace cxr {

namespace {

constexpr int kCheckpointVersion = 1;

std::string slot_name(const char* prefix, std::size_t i) {
  std::ostringstream os;
  os << prefix << "_";
  if (i < 100) os << (i < 10 ? "00" : "0");
  os << i << ".npy";
  return os.str();
}

Tensor load_slot(const std::filesystem::path& dir, const std::string& name,
                 const Tensor& expected_shape) {
  Tensor t = read_npy((dir / name).string()).to_tensor();
  if (!t.same_shape(expected_shape)) {
    throw IoError("checkpoint: '" + name + "' has shape " + t.shape_string() + ", expected " +
                  expected_shape.shape_string());
  }
  return t;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& config) {
  nlohmann::json j;
  j["learning_rate"] = config.learning_rate;
  j["beta1"] = config.beta1;
  j["beta2"] = config.beta2;
  j["eps_hat"] = config.eps_hat;
  j["batch_size"] = config.batch_size;
  j["epochs"] = config.epochs;
  j["seed"] = config.seed;
  j["loss_kind"] = loss_kind_name(config.loss_kind);
  j["use_class_weights"] = config.use_class_weights;
  j["threshold"] = config.threshold;
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TrainConfig cfg;
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.beta1 = j.at("beta1").get<double>();
  cfg.beta2 = j.at("beta2").get<double>();
  cfg.eps_hat = j.at("eps_hat").get<double>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.epochs = j.at("epochs").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.loss_kind = parse_loss_kind(j.at("loss_kind").get<std::string>());
  cfg.use_class_weights = j.at("use_class_weights").get<bool>();
  cfg.threshold = j.at("threshold").get<double>();
  return cfg;
}

void save_checkpoint(Model& model, const AdamState& state, const TrainConfig& config,
                     const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);

  {
    std::ofstream out(root / "version");
    if (!out) throw IoError("cannot write checkpoint version in '" + dir + "'");
    out << kCheckpointVersion << "\n";
  }

  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["model"] = nlohmann::json::parse(model_config_to_json(model.config));
  j["train"] = nlohmann::json::parse(train_config_to_json(config));
  j["adam_t"] = state.t;
  j["epochs_completed"] = state.epochs_completed;
  {
    std::ofstream out(root / "config.json");
    if (!out) throw IoError("cannot write checkpoint config in '" + dir + "'");
    out << j.dump(2) << "\n";
  }

  const std::vector<Tensor*> params = model.parameters();
  if (params.size() != state.m.size() || params.size() != state.v.size()) {
    throw ShapeError("save_checkpoint: Adam state does not match model parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    write_npy((root / slot_name("params", i)).string(), *params[i]);
    write_npy((root / slot_name("adam_m", i)).string(), state.m[i]);
    write_npy((root / slot_name("adam_v", i)).string(), state.v[i]);
  }
  const std::vector<Tensor*> buffers = model.buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    write_npy((root / slot_name("stats", i)).string(), *buffers[i]);
  }
}

Checkpoint load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);

  {
    std::ifstream in(root / "version");
    if (!in) throw IoError("checkpoint '" + dir + "': missing version file");
    int version = -1;
    in >> version;
    if (version != kCheckpointVersion) {
      throw IoError("checkpoint '" + dir + "': version " + std::to_string(version) +
                    " not supported (want " + std::to_string(kCheckpointVersion) + ")");
    }
  }

  std::ifstream cfg_in(root / "config.json");
  if (!cfg_in) throw IoError("checkpoint '" + dir + "': missing config.json");
  std::ostringstream buf;
  buf << cfg_in.rdbuf();
  nlohmann::json j = nlohmann::json::parse(buf.str());
  if (j.at("format_version").get<int>() != kCheckpointVersion) {
    throw IoError("checkpoint '" + dir + "': config format version mismatch");
  }

  Checkpoint ckpt{build_model(model_config_from_json(j.at("model").dump())),
                  AdamState{},
                  train_config_from_json(j.at("train").dump())};
  ckpt.state.t = j.at("adam_t").get<std::uint64_t>();
  ckpt.state.epochs_completed = j.at("epochs_completed").get<std::uint64_t>();

  const std::vector<Tensor*> params = ckpt.model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    *params[i] = load_slot(root, slot_name("params", i), *params[i]);
    ckpt.state.m.push_back(load_slot(root, slot_name("adam_m", i), *params[i]));
    ckpt.state.v.push_back(load_slot(root, slot_name("adam_v", i), *params[i]));
  }
  const std::vector<Tensor*> buffers = ckpt.model.buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    *buffers[i] = load_slot(root, slot_name("stats", i), *buffers[i]);
  }
  return ckpt;
}

}  // namespace cxr

#include "cxr/models.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "cxr/error.hpp"
#include "cxr/rng.hpp"

namespace cxr {

Task parse_task(const std::string& name) {
  if (name == "binary") return Task::Binary;
  if (name == "multilabel") return Task::Multilabel;
  throw ValueError("unknown task '" + name + "' (want binary or multilabel)");
}

std::string task_name(Task task) {
  return task == Task::Binary ? "binary" : "multilabel";
}

Var ForwardState::param(Tensor& owned) {
  Var v;
  if (external != nullptr) {
    if (cursor >= external->size()) {
      throw ValueError("forward_with: not enough external parameters");
    }
    v = (*external)[cursor++];
    check_same_shape(v.value(), owned, "forward_with parameter");
  } else {
    v = Var(owned, with_grad);
  }
  if (sink != nullptr) sink->push_back(v);
  return v;
}

namespace {

constexpr double kBnEps = 1e-5;

Tensor he_normal(std::vector<std::size_t> shape, std::size_t fan_in, RandomStream& rng) {
  Tensor t(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * stddev;
  return t;
}

class ConvLayer : public Layer {
 public:
  ConvLayer(std::size_t in_channels, ConvSpec spec, RandomStream& rng)
      : spec_(spec),
        weight_(he_normal({spec.filter_count, in_channels, spec.kernel_size, spec.kernel_size},
                          in_channels * spec.kernel_size * spec.kernel_size, rng)),
        bias_(Tensor::zeros({spec.filter_count})) {}

  Var forward(const Var& x, ForwardState& st) override {
    Var w = st.param(weight_);  // slot order: weight, then bias
    Var b = st.param(bias_);
    return conv2d(x, w, b, spec_);
  }
  void visit_params(const std::function<void(Tensor&)>& fn) override {
    fn(weight_);
    fn(bias_);
  }
  std::string name() const override {
    return "conv" + std::to_string(spec_.kernel_size) + "x" + std::to_string(spec_.kernel_size) +
           "(" + std::to_string(spec_.filter_count) + ")";
  }

 private:
  ConvSpec spec_;
  Tensor weight_, bias_;
};

class ActivationLayer : public Layer {
 public:
  explicit ActivationLayer(ActivationKind kind) : kind_(kind) {}
  Var forward(const Var& x, ForwardState&) override { return activation(kind_, x); }
  std::string name() const override { return activation_kind_name(kind_); }

 private:
  ActivationKind kind_;
};

class MaxPoolLayer : public Layer {
 public:
  explicit MaxPoolLayer(std::size_t window) : window_(window) {}
  Var forward(const Var& x, ForwardState&) override { return maxpool2d(x, window_); }
  std::string name() const override { return "maxpool" + std::to_string(window_); }

 private:
  std::size_t window_;
};

class FlattenLayer : public Layer {
 public:
  Var forward(const Var& x, ForwardState&) override { return flatten(x); }
  std::string name() const override { return "flatten"; }
};

class DenseLayer : public Layer {
 public:
  DenseLayer(std::size_t in, std::size_t out, RandomStream& rng)
      : weight_(he_normal({in, out}, in, rng)), bias_(Tensor::zeros({out})) {}

  Var forward(const Var& x, ForwardState& st) override {
    Var w = st.param(weight_);
    Var b = st.param(bias_);
    return affine(x, w, b);
  }
  void visit_params(const std::function<void(Tensor&)>& fn) override {
    fn(weight_);
    fn(bias_);
  }
  std::string name() const override {
    return "dense(" + std::to_string(weight_.extent(1)) + ")";
  }

 private:
  Tensor weight_, bias_;
};

class BatchNormLayer : public Layer {
 public:
  explicit BatchNormLayer(std::size_t channels)
      : gamma_(Tensor::full({channels}, 1.0)), beta_(Tensor::zeros({channels})), state_(channels) {}

  Var forward(const Var& x, ForwardState& st) override {
    BatchNormState* state = &state_;
    if (st.training && (!st.track_stats || st.external != nullptr)) state = nullptr;
    Var gamma = st.param(gamma_);
    Var beta = st.param(beta_);
    return batchnorm2d(x, gamma, beta, kBnEps, st.training, state);
  }
  void visit_params(const std::function<void(Tensor&)>& fn) override {
    fn(gamma_);
    fn(beta_);
  }
  void visit_buffers(const std::function<void(Tensor&)>& fn) override {
    fn(state_.running_mean);
    fn(state_.running_var);
  }
  std::string name() const override { return "batchnorm"; }

 private:
  Tensor gamma_, beta_;
  BatchNormState state_;
};

class GlobalAvgPoolLayer : public Layer {
 public:
  Var forward(const Var& x, ForwardState&) override { return global_avg_pool(x); }
  std::string name() const override { return "gap"; }
};

Var run_chain(const std::vector<std::unique_ptr<Layer>>& chain, Var x, ForwardState& st) {
  for (const auto& layer : chain) x = layer->forward(x, st);
  return x;
}

// Residual unit: relu(main(x) + shortcut(x)); an empty shortcut is the
// identity skip.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(std::vector<std::unique_ptr<Layer>> main,
                std::vector<std::unique_ptr<Layer>> shortcut)
      : main_(std::move(main)), shortcut_(std::move(shortcut)) {}

  Var forward(const Var& x, ForwardState& st) override {
    Var h = run_chain(main_, x, st);
    Var s = shortcut_.empty() ? x : run_chain(shortcut_, x, st);
    return relu(add(h, s));
  }
  void visit_params(const std::function<void(Tensor&)>& fn) override {
    for (auto& l : main_) l->visit_params(fn);
    for (auto& l : shortcut_) l->visit_params(fn);
  }
  void visit_buffers(const std::function<void(Tensor&)>& fn) override {
    for (auto& l : main_) l->visit_buffers(fn);
    for (auto& l : shortcut_) l->visit_buffers(fn);
  }
  std::string name() const override { return "residual"; }

 private:
  std::vector<std::unique_ptr<Layer>> main_;
  std::vector<std::unique_ptr<Layer>> shortcut_;
};

// Tracks spatial extents while stacking layers so collapse is reported with
// the offending layer index.
struct ShapeCursor {
  std::size_t channels, h, w;
  std::size_t layer_index = 0;

  void conv(const ConvSpec& spec) {
    try {
      h = conv_output_extent(h, spec);
      w = conv_output_extent(w, spec);
    } catch (const Error& e) {
      throw ValueError("layer " + std::to_string(layer_index) + ": " + e.what());
    }
    channels = spec.filter_count;
  }
  void pool(std::size_t window) {
    if (h % window != 0 || w % window != 0 || h < window || w < window) {
      throw ValueError("layer " + std::to_string(layer_index) + ": feature map " +
                       std::to_string(h) + "x" + std::to_string(w) +
                       " not divisible by pool window " + std::to_string(window));
    }
    h /= window;
    w /= window;
  }
};

ActivationKind head_activation(Task task) {
  return task == Task::Binary ? ActivationKind::Softmax : ActivationKind::Sigmoid;
}

Model build_plain_cnn(const ModelConfig& config) {
  ModelConfig cfg = config;
  if (cfg.conv_blocks.empty()) {
    throw ValueError("plain CNN config needs at least one conv block");
  }
  if (cfg.output_dim != (cfg.task == Task::Binary ? 2u : 14u)) {
    throw ValueError("output_dim " + std::to_string(cfg.output_dim) + " inconsistent with task " +
                     task_name(cfg.task));
  }

  Model model;
  model.config = cfg;
  RandomStream rng(cfg.seed);
  ShapeCursor shape{cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]};

  for (const ConvBlockSpec& block : cfg.conv_blocks) {
    const std::size_t in_ch = shape.channels;
    shape.conv(block.conv);
    model.layers.push_back(std::make_unique<ConvLayer>(in_ch, block.conv, rng));
    if (cfg.batchnorm) model.layers.push_back(std::make_unique<BatchNormLayer>(shape.channels));
    model.layers.push_back(std::make_unique<ActivationLayer>(ActivationKind::Relu));
    if (block.pool) {
      shape.pool(2);
      model.layers.push_back(std::make_unique<MaxPoolLayer>(2));
    }
    ++shape.layer_index;
  }

  model.layers.push_back(std::make_unique<FlattenLayer>());
  std::size_t width = shape.channels * shape.h * shape.w;
  for (std::size_t dense : cfg.dense_widths) {
    model.layers.push_back(std::make_unique<DenseLayer>(width, dense, rng));
    model.layers.push_back(std::make_unique<ActivationLayer>(ActivationKind::Relu));
    width = dense;
  }
  model.layers.push_back(std::make_unique<DenseLayer>(width, cfg.output_dim, rng));
  model.layers.push_back(std::make_unique<ActivationLayer>(head_activation(cfg.task)));
  return model;
}

}  // namespace

Model build_binary_cnn(const ModelConfig& config) {
  if (config.task != Task::Binary) {
    throw ValueError("build_binary_cnn requires task = binary");
  }
  return build_plain_cnn(config);
}

Model build_multilabel_cnn(const ModelConfig& config) {
  if (config.task != Task::Multilabel) {
    throw ValueError("build_multilabel_cnn requires task = multilabel");
  }
  return build_plain_cnn(config);
}

namespace {

std::vector<std::unique_ptr<Layer>> make_conv_bn(std::size_t in_ch, const ConvSpec& spec,
                                                 RandomStream& rng, bool with_relu) {
  std::vector<std::unique_ptr<Layer>> chain;
  chain.push_back(std::make_unique<ConvLayer>(in_ch, spec, rng));
  chain.push_back(std::make_unique<BatchNormLayer>(spec.filter_count));
  if (with_relu) chain.push_back(std::make_unique<ActivationLayer>(ActivationKind::Relu));
  return chain;
}

void append(std::vector<std::unique_ptr<Layer>>& dst, std::vector<std::unique_ptr<Layer>> src) {
  for (auto& l : src) dst.push_back(std::move(l));
}

}  // namespace

Model build_resnet(const ModelConfig& config) {
  if (!config.residual) throw ValueError("build_resnet requires residual = true");
  if (config.depth_per_stage.empty() || config.stage_filters.size() != config.depth_per_stage.size() ||
      config.stage_strides.size() != config.depth_per_stage.size()) {
    throw ValueError("build_resnet: depth_per_stage, stage_filters and stage_strides must align");
  }
  if (config.output_dim != (config.task == Task::Binary ? 2u : 14u)) {
    throw ValueError("output_dim " + std::to_string(config.output_dim) +
                     " inconsistent with task " + task_name(config.task));
  }

  Model model;
  model.config = config;
  RandomStream rng(config.seed);
  ShapeCursor shape{config.input_shape[0], config.input_shape[1], config.input_shape[2]};
  const std::size_t expansion = config.block_kind == ResBlockKind::Bottleneck ? 4 : 1;

  // Stem.
  {
    const std::size_t in_ch = shape.channels;
    shape.conv(config.stem);
    model.layers.push_back(std::make_unique<ConvLayer>(in_ch, config.stem, rng));
    model.layers.push_back(std::make_unique<BatchNormLayer>(shape.channels));
    model.layers.push_back(std::make_unique<ActivationLayer>(ActivationKind::Relu));
    if (config.stem_pool) {
      shape.pool(2);
      model.layers.push_back(std::make_unique<MaxPoolLayer>(2));
    }
    ++shape.layer_index;
  }

  for (std::size_t stage = 0; stage < config.depth_per_stage.size(); ++stage) {
    const std::size_t planes = config.stage_filters[stage];
    for (std::size_t block = 0; block < config.depth_per_stage[stage]; ++block) {
      const std::size_t stride = block == 0 ? config.stage_strides[stage] : 1;
      const std::size_t in_ch = shape.channels;
      const std::size_t out_ch = planes * expansion;

      std::vector<std::unique_ptr<Layer>> main;
      if (config.block_kind == ResBlockKind::Basic) {
        const ConvSpec c1{planes, 3, stride, 1};
        const ConvSpec c2{planes, 3, 1, 1};
        append(main, make_conv_bn(in_ch, c1, rng, true));
        append(main, make_conv_bn(planes, c2, rng, false));
        shape.conv(c1);
        shape.conv(c2);
      } else {
        const ConvSpec c1{planes, 1, 1, 0};
        const ConvSpec c2{planes, 3, stride, 1};
        const ConvSpec c3{out_ch, 1, 1, 0};
        append(main, make_conv_bn(in_ch, c1, rng, true));
        append(main, make_conv_bn(planes, c2, rng, true));
        append(main, make_conv_bn(planes, c3, rng, false));
        shape.conv(c1);
        shape.conv(c2);
        shape.conv(c3);
      }

      std::vector<std::unique_ptr<Layer>> shortcut;
      if (stride != 1 || in_ch != out_ch) {
        // 1x1 projection matches channels and stride on the skip path.
        shortcut = make_conv_bn(in_ch, ConvSpec{out_ch, 1, stride, 0}, rng, false);
      }
      model.layers.push_back(
          std::make_unique<ResidualBlock>(std::move(main), std::move(shortcut)));
      ++shape.layer_index;
    }
  }

  model.layers.push_back(std::make_unique<GlobalAvgPoolLayer>());
  model.layers.push_back(std::make_unique<DenseLayer>(shape.channels, config.output_dim, rng));
  model.layers.push_back(std::make_unique<ActivationLayer>(head_activation(config.task)));
  return model;
}

Model build_model(const ModelConfig& config) {
  if (config.residual) return build_resnet(config);
  return config.task == Task::Binary ? build_binary_cnn(config) : build_multilabel_cnn(config);
}

void Model::check_batch(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.extent(1) != config.input_shape[0] ||
      batch.extent(2) != config.input_shape[1] || batch.extent(3) != config.input_shape[2]) {
    throw ShapeError("forward: expected batch of shape (B, " +
                     std::to_string(config.input_shape[0]) + ", " +
                     std::to_string(config.input_shape[1]) + ", " +
                     std::to_string(config.input_shape[2]) + "), received " +
                     batch.shape_string());
  }
}

Model::Graph Model::forward(const Tensor& batch, bool training, bool track_stats) {
  check_batch(batch);
  Graph graph;
  ForwardState st;
  st.training = training;
  st.with_grad = training;
  st.track_stats = track_stats;
  st.sink = &graph.params;
  Var x(batch, false);
  for (auto& layer : layers) x = layer->forward(x, st);
  graph.output = x;
  return graph;
}

Tensor Model::predict(const Tensor& batch) {
  check_batch(batch);
  ForwardState st;
  st.training = false;
  st.with_grad = false;
  Var x(batch, false);
  for (auto& layer : layers) x = layer->forward(x, st);
  return x.value();
}

Var Model::forward_with(const std::vector<Var>& params, const Tensor& batch, bool training) {
  check_batch(batch);
  ForwardState st;
  st.training = training;
  st.track_stats = false;
  st.external = &params;
  Var x(batch, false);
  for (auto& layer : layers) x = layer->forward(x, st);
  if (st.cursor != params.size()) {
    throw ValueError("forward_with: " + std::to_string(params.size()) +
                     " parameters supplied, " + std::to_string(st.cursor) + " consumed");
  }
  return x;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers) {
    layer->visit_params([&](Tensor& t) { out.push_back(&t); });
  }
  return out;
}

std::vector<Tensor*> Model::buffers() {
  std::vector<Tensor*> out;
  for (auto& layer : layers) {
    layer->visit_buffers([&](Tensor& t) { out.push_back(&t); });
  }
  return out;
}

std::size_t Model::param_count() {
  std::size_t n = 0;
  for (Tensor* t : parameters()) n += t->size();
  return n;
}

ModelConfig binary_baseline_config(std::array<std::size_t, 3> input_shape) {
  ModelConfig cfg;
  cfg.task = Task::Binary;
  cfg.input_shape = input_shape;
  cfg.conv_blocks = {{{32, 3, 1, 1}, true}, {{32, 3, 1, 1}, true}, {{32, 3, 1, 1}, true}};
  cfg.dense_widths = {128};
  cfg.output_dim = 2;
  return cfg;
}

ModelConfig binary_optimized_config(std::array<std::size_t, 3> input_shape) {
  ModelConfig cfg;
  cfg.task = Task::Binary;
  cfg.input_shape = input_shape;
  cfg.conv_blocks = {
      {{32, 3, 1, 1}, true}, {{32, 3, 1, 1}, true}, {{64, 3, 1, 1}, true}, {{64, 3, 1, 1}, true}};
  cfg.dense_widths = {256};
  cfg.output_dim = 2;
  return cfg;
}

ModelConfig multilabel_cnn_config(std::array<std::size_t, 3> input_shape) {
  ModelConfig cfg;
  cfg.task = Task::Multilabel;
  cfg.input_shape = input_shape;
  cfg.conv_blocks = {
      {{32, 3, 1, 1}, true}, {{32, 3, 1, 1}, true}, {{64, 3, 1, 1}, true}, {{64, 3, 1, 1}, true}};
  cfg.dense_widths = {256, 128};
  cfg.output_dim = 14;
  return cfg;
}

ModelConfig resnet_tiny_config(Task task, std::array<std::size_t, 3> input_shape) {
  ModelConfig cfg;
  cfg.task = task;
  cfg.input_shape = input_shape;
  cfg.output_dim = task == Task::Binary ? 2 : 14;
  cfg.residual = true;
  cfg.block_kind = ResBlockKind::Basic;
  cfg.stem = {8, 3, 1, 1};
  cfg.stem_pool = false;
  cfg.depth_per_stage = {1, 1};
  cfg.stage_filters = {8, 16};
  cfg.stage_strides = {1, 2};
  return cfg;
}

ModelConfig resnet50_config(Task task, std::array<std::size_t, 3> input_shape) {
  ModelConfig cfg;
  cfg.task = task;
  cfg.input_shape = input_shape;
  cfg.output_dim = task == Task::Binary ? 2 : 14;
  cfg.residual = true;
  cfg.block_kind = ResBlockKind::Bottleneck;
  cfg.stem = {64, 7, 2, 3};
  cfg.stem_pool = true;
  cfg.depth_per_stage = {3, 4, 6, 3};
  cfg.stage_filters = {64, 128, 256, 512};
  cfg.stage_strides = {1, 2, 2, 2};
  return cfg;
}

std::string model_config_to_json(const ModelConfig& config) {
  nlohmann::json j;
  j["task"] = task_name(config.task);
  j["input_shape"] = config.input_shape;
  nlohmann::json blocks = nlohmann::json::array();
  for (const ConvBlockSpec& b : config.conv_blocks) {
    blocks.push_back({{"filters", b.conv.filter_count},
                      {"kernel", b.conv.kernel_size},
                      {"stride", b.conv.stride},
                      {"padding", b.conv.padding},
                      {"pool", b.pool}});
  }
  j["conv_blocks"] = blocks;
  j["dense_widths"] = config.dense_widths;
  j["output_dim"] = config.output_dim;
  j["batchnorm"] = config.batchnorm;
  j["residual"] = config.residual;
  j["block_kind"] = config.block_kind == ResBlockKind::Basic ? "basic" : "bottleneck";
  j["stem"] = {{"filters", config.stem.filter_count},
               {"kernel", config.stem.kernel_size},
               {"stride", config.stem.stride},
               {"padding", config.stem.padding}};
  j["stem_pool"] = config.stem_pool;
  j["depth_per_stage"] = config.depth_per_stage;
  j["stage_filters"] = config.stage_filters;
  j["stage_strides"] = config.stage_strides;
  j["seed"] = config.seed;
  return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig cfg;
  cfg.task = parse_task(j.at("task").get<std::string>());
  auto shape = j.at("input_shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3) throw ParseError("model config: input_shape must have 3 entries");
  cfg.input_shape = {shape[0], shape[1], shape[2]};
  for (const auto& b : j.at("conv_blocks")) {
    ConvBlockSpec block;
    block.conv.filter_count = b.at("filters").get<std::size_t>();
    block.conv.kernel_size = b.at("kernel").get<std::size_t>();
    block.conv.stride = b.at("stride").get<std::size_t>();
    block.conv.padding = b.at("padding").get<std::size_t>();
    block.pool = b.at("pool").get<bool>();
    cfg.conv_blocks.push_back(block);
  }
  cfg.dense_widths = j.at("dense_widths").get<std::vector<std::size_t>>();
  cfg.output_dim = j.at("output_dim").get<std::size_t>();
  cfg.batchnorm = j.at("batchnorm").get<bool>();
  cfg.residual = j.at("residual").get<bool>();
  cfg.block_kind = j.at("block_kind").get<std::string>() == "bottleneck" ? ResBlockKind::Bottleneck
                                                                         : ResBlockKind::Basic;
  cfg.stem.filter_count = j.at("stem").at("filters").get<std::size_t>();
  cfg.stem.kernel_size = j.at("stem").at("kernel").get<std::size_t>();
  cfg.stem.stride = j.at("stem").at("stride").get<std::size_t>();
  cfg.stem.padding = j.at("stem").at("padding").get<std::size_t>();
  cfg.stem_pool = j.at("stem_pool").get<bool>();
  cfg.depth_per_stage = j.at("depth_per_stage").get<std::vector<std::size_t>>();
  cfg.stage_filters = j.at("stage_filters").get<std::vector<std::size_t>>();
  cfg.stage_strides = j.at("stage_strides").get<std::vector<std::size_t>>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace cxr

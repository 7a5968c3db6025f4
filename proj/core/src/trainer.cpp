#include "cxr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "cxr/error.hpp"
#include "cxr/npy.hpp"
#include "cxr/rng.hpp"

namespace cxr {

LossKind parse_loss_kind(const std::string& name) {
  if (name == "eq1-softmax") return LossKind::Eq1Softmax;
  if (name == "weighted-bce") return LossKind::WeightedBce;
  throw ValueError("unknown loss kind '" + name + "' (want eq1-softmax or weighted-bce)");
}

std::string loss_kind_name(LossKind kind) {
  return kind == LossKind::Eq1Softmax ? "eq1-softmax" : "weighted-bce";
}

LossKind default_loss_kind(Task task) {
  return task == Task::Binary ? LossKind::Eq1Softmax : LossKind::WeightedBce;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValueError("learning rate must be positive");
  if (!(beta1 > 0.0) || !(beta1 < 1.0) || !(beta2 > 0.0) || !(beta2 < 1.0)) {
    throw ValueError("Adam betas must lie in (0, 1)");
  }
  if (!(eps_hat > 0.0)) throw ValueError("Adam eps must be positive");
  if (batch_size == 0) throw ValueError("batch size must be positive");
  if (!(threshold > 0.0) || !(threshold < 1.0)) throw ValueError("threshold must lie in (0, 1)");
}

AdamState AdamState::init_like(Model& model) {
  AdamState state;
  for (Tensor* p : model.parameters()) {
    state.m.push_back(Tensor::zeros(p->shape()));
    state.v.push_back(Tensor::zeros(p->shape()));
  }
  return state;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const TrainConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw ShapeError("adam_step: parameter/gradient/moment count mismatch");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    check_same_shape(p, g, "adam_step gradient");
    check_same_shape(p, state.m[i], "adam_step first moment");
    check_same_shape(p, state.v[i], "adam_step second moment");
    double* pd = p.data();
    double* md = state.m[i].data();
    double* vd = state.v[i].data();
    const double* gd = g.data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      md[j] = config.beta1 * md[j] + (1.0 - config.beta1) * gd[j];
      vd[j] = config.beta2 * vd[j] + (1.0 - config.beta2) * gd[j] * gd[j];
      const double mhat = md[j] / bc1;
      const double vhat = vd[j] / bc2;
      pd[j] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.eps_hat);
    }
  }
}

std::array<std::size_t, 3> DataSet::image_shape() const {
  if (images.empty()) throw ValueError("empty dataset");
  const Tensor& t = images.front();
  return {t.extent(0), t.extent(1), t.extent(2)};
}

Tensor DataSet::batch_images(const std::vector<std::size_t>& idx) const {
  const auto [c, h, w] = image_shape();
  Tensor batch({idx.size(), c, h, w});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Tensor& img = images[idx[i]];
    std::copy(img.data(), img.data() + img.size(), batch.data() + i * img.size());
  }
  return batch;
}

Tensor DataSet::loss_targets(const std::vector<std::size_t>& idx, Task task) const {
  if (task == Task::Binary) {
    Tensor t = Tensor::zeros({idx.size(), 2});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      t.at2(i, static_cast<std::size_t>(derive_binary_label(labels[idx[i]]))) = 1.0;
    }
    return t;
  }
  Tensor t = Tensor::zeros({idx.size(), kNumLabels});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      t.at2(i, c) = static_cast<double>(labels[idx[i]].bits[c]);
    }
  }
  return t;
}

Tensor DataSet::metric_labels(Task task) const {
  if (task == Task::Binary) {
    Tensor t({size(), 1});
    for (std::size_t i = 0; i < size(); ++i) {
      t.at2(i, 0) = static_cast<double>(derive_binary_label(labels[i]));
    }
    return t;
  }
  std::vector<std::size_t> all(size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return loss_targets(all, Task::Multilabel);
}

DataSet load_dataset(const DatasetManifest& manifest, const std::string& image_dir) {
  namespace fs = std::filesystem;
  DataSet data;
  data.images.reserve(manifest.records.size());
  data.labels.reserve(manifest.records.size());
  for (const SampleRecord& r : manifest.records) {
    const std::string path = (fs::path(image_dir) / (r.image_id + ".npy")).string();
    Tensor img = read_npy(path).to_tensor();
    if (img.rank() == 2) img = img.reshaped({1, img.extent(0), img.extent(1)});
    if (img.rank() != 3) {
      throw ShapeError("'" + path + "': expected image array, got " + img.shape_string());
    }
    if (!data.images.empty() && !img.same_shape(data.images.front())) {
      throw ShapeError("'" + path + "': image shape " + img.shape_string() +
                       " differs from first image " + data.images.front().shape_string());
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(r.labels);
  }
  return data;
}

std::vector<std::string> task_class_names(Task task) {
  if (task == Task::Binary) return {"No Finding", "Disease Present"};
  return std::vector<std::string>(label_space().begin(), label_space().end());
}

ClassWeights training_class_weights(const DataSet& data, Task task) {
  std::vector<std::size_t> counts;
  if (task == Task::Binary) {
    counts.assign(2, 0);
    for (const LabelVector& l : data.labels) counts[derive_binary_label(l)] += 1;
  } else {
    counts.assign(kNumLabels, 0);
    for (const LabelVector& l : data.labels) {
      for (std::size_t c = 0; c < kNumLabels; ++c) counts[c] += l.bits[c];
    }
  }
  return compute_class_weights(counts, data.size(), task_class_names(task));
}

namespace {

Var apply_loss(LossKind kind, const Var& probs, const Tensor& targets, const ClassWeights& w) {
  return kind == LossKind::Eq1Softmax ? weighted_cross_entropy(probs, targets, w)
                                      : weighted_bce_multilabel(probs, targets, w);
}

void check_task_loss(const Model& model, const TrainConfig& config) {
  const LossKind expected = default_loss_kind(model.config.task);
  if (config.loss_kind != expected) {
    throw ValueError("loss kind '" + loss_kind_name(config.loss_kind) +
                     "' does not match task '" + task_name(model.config.task) + "' (expected '" +
                     loss_kind_name(expected) + "')");
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order,
                                                   std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, order.size());
    batches.emplace_back(order.begin() + static_cast<long>(start),
                         order.begin() + static_cast<long>(end));
  }
  return batches;  // last partial batch kept
}

double dataset_loss(Model& model, const DataSet& data, const TrainConfig& config,
                    const ClassWeights& weights) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  double total = 0.0;
  for (const auto& batch : make_batches(all, config.batch_size)) {
    Tensor probs = model.predict(data.batch_images(batch));
    Var loss = apply_loss(config.loss_kind, Var(probs, false), data.loss_targets(batch, model.config.task),
                          weights);
    total += loss.value()[0] * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

TrainHistory train(Model& model, const DataSet& train_data, const DataSet& val_data,
                   const TrainConfig& config, AdamState* state) {
  config.validate();
  check_task_loss(model, config);
  if (train_data.size() == 0 || val_data.size() == 0) {
    throw ValueError("train: manifests must be non-empty");
  }

  AdamState local;
  if (state == nullptr) {
    local = AdamState::init_like(model);
    state = &local;
  }

  const Task task = model.config.task;
  const ClassWeights weights =
      config.use_class_weights
          ? training_class_weights(train_data, task)  // train split only
          : ClassWeights::ones(task == Task::Binary ? 2 : kNumLabels);

  const std::vector<Tensor*> params = model.parameters();
  const Tensor val_labels = val_data.metric_labels(task);
  const std::vector<std::string> names =
      task == Task::Binary ? std::vector<std::string>{"Disease Present"} : task_class_names(task);

  TrainHistory history;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const auto start_time = std::chrono::steady_clock::now();
    const std::uint64_t global_epoch = state->epochs_completed;

    std::vector<std::size_t> order(train_data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RandomStream rng(mix_seed(config.seed, global_epoch));
    rng.shuffle(order);

    double loss_sum = 0.0;
    for (const auto& batch : make_batches(std::move(order), config.batch_size)) {
      Model::Graph graph = model.forward(train_data.batch_images(batch), true);
      Var loss = apply_loss(config.loss_kind, graph.output,
                            train_data.loss_targets(batch, task), weights);
      backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(graph.params.size());
      for (const Var& p : graph.params) grads.push_back(p.grad());
      adam_step(params, grads, *state, config);
      loss_sum += loss.value()[0] * static_cast<double>(batch.size());
    }

    TrainHistory::Epoch row;
    row.epoch = static_cast<std::size_t>(global_epoch) + 1;
    row.train_loss = loss_sum / static_cast<double>(train_data.size());
    row.val_loss = dataset_loss(model, val_data, config, weights);
    Tensor val_probs = predict_probs(model, val_data, config.batch_size);
    if (task == Task::Binary) {
      Tensor col({val_probs.extent(0), 1});
      for (std::size_t i = 0; i < val_probs.extent(0); ++i) col.at2(i, 0) = val_probs.at2(i, 1);
      val_probs = col;
    }
    MetricsReport report = classification_report(val_probs, val_labels, config.threshold, names);
    row.val_accuracy = report.accuracy;
    row.val_mean_auc = report.mean_auc;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    history.epochs.push_back(row);
    state->epochs_completed += 1;
  }
  return history;
}

Tensor predict_probs(Model& model, const DataSet& data, std::size_t batch_size) {
  if (data.size() == 0) throw ValueError("predict_probs: empty dataset");
  if (batch_size == 0) throw ValueError("predict_probs: batch size must be positive");
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Tensor out({data.size(), model.config.output_dim});
  for (const auto& batch : make_batches(all, batch_size)) {
    Tensor probs = model.predict(data.batch_images(batch));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t c = 0; c < model.config.output_dim; ++c) {
        out.at2(batch[i], c) = probs.at2(i, c);
      }
    }
  }
  return out;
}

MetricsReport evaluate(Model& model, const DataSet& data, const TrainConfig& config) {
  config.validate();
  if (data.size() == 0) throw ValueError("evaluate: empty dataset");
  const Task task = model.config.task;
  if (task == Task::Binary) {
    bool has_pos = false, has_neg = false;
    for (const LabelVector& l : data.labels) (derive_binary_label(l) ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw ValueError("ROC undefined without both classes");
  }
  Tensor probs = predict_probs(model, data, config.batch_size);
  if (task == Task::Binary) {
    Tensor col({probs.extent(0), 1});
    for (std::size_t i = 0; i < probs.extent(0); ++i) col.at2(i, 0) = probs.at2(i, 1);
    probs = col;
  }
  const std::vector<std::string> names =
      task == Task::Binary ? std::vector<std::string>{"Disease Present"} : task_class_names(task);
  return classification_report(probs, data.metric_labels(task), config.threshold, names);
}

std::string history_csv(const TrainHistory& history) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_loss,val_accuracy,val_mean_auc\n";
  for (const auto& e : history.epochs) {
    os << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.val_accuracy << ",";
    if (e.val_mean_auc) os << *e.val_mean_auc;
    os << "\n";
  }
  return os.str();
}

}  // namespace cxr

#include <doctest.h>

#include <cmath>

#include "cxr/checkpoint.hpp"
#include "cxr/error.hpp"
#include "cxr/npy.hpp"
#include "cxr/rng.hpp"
#include "cxr/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace cxr;

namespace {

ModelConfig tiny_binary_config(std::size_t side, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.task = Task::Binary;
  cfg.input_shape = {1, side, side};
  cfg.conv_blocks = {{{4, 3, 1, 1}, true}};
  cfg.dense_widths = {16};
  cfg.output_dim = 2;
  cfg.seed = seed;
  return cfg;
}

TrainConfig quick_config(std::size_t epochs, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  cfg.batch_size = 8;
  return cfg;
}

bool params_equal(Model& a, Model& b) {
  auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!pa[i]->same_shape(*pb[i])) return false;
    for (std::size_t j = 0; j < pa[i]->size(); ++j) {
      if ((*pa[i])[j] != (*pb[i])[j]) return false;
    }
  }
  return true;
}

// Hand-set head weights so the model emits the true label as probability:
// images are constant 0 or 1, so relu(conv(identity)) sums to side*side*y.
Model oracle_model(std::size_t side) {
  ModelConfig cfg;
  cfg.task = Task::Binary;
  cfg.input_shape = {1, side, side};
  cfg.conv_blocks = {{{1, 1, 1, 0}, false}};
  cfg.dense_widths = {};
  cfg.output_dim = 2;
  Model m = build_binary_cnn(cfg);
  auto params = m.parameters();
  (*params[0])[0] = 1.0;  // conv passthrough
  (*params[1])[0] = 0.0;
  Tensor& w = *params[2];  // (side*side, 2)
  Tensor& b = *params[3];
  const double k = 50.0 / static_cast<double>(side * side);
  for (std::size_t d = 0; d < w.extent(0); ++d) {
    w.at2(d, 0) = -k;
    w.at2(d, 1) = k;
  }
  b[0] = 25.0;
  b[1] = -25.0;
  return m;
}

DataSet constant_images(const std::vector<int>& labels, std::size_t side) {
  DataSet data;
  for (int y : labels) {
    data.images.push_back(Tensor::full({1, side, side}, static_cast<double>(y)));
    data.labels.push_back(fixtures::disease_label(y != 0));
  }
  return data;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor p({2}, {1.5, -0.5});
  std::vector<Tensor*> params{&p};
  AdamState state;
  state.m.push_back(Tensor::zeros({2}));
  state.v.push_back(Tensor::zeros({2}));
  adam_step(params, {Tensor::zeros({2})}, state, TrainConfig{});
  CHECK(p[0] == 1.5);
  CHECK(p[1] == -0.5);
  CHECK(state.t == 1);
}

TEST_CASE("adam: first-step magnitude is about lr regardless of gradient scale") {
  for (double g : {1e-6, 1.0, 1e6}) {
    Tensor p({1}, {0.0});
    std::vector<Tensor*> params{&p};
    AdamState state;
    state.m.push_back(Tensor::zeros({1}));
    state.v.push_back(Tensor::zeros({1}));
    TrainConfig cfg;
    adam_step(params, {Tensor({1}, {g})}, state, cfg);
    CHECK(std::fabs(p[0]) ==
          doctest::Approx(cfg.learning_rate * g / (g + cfg.eps_hat)).epsilon(1e-12));
  }
}

TEST_CASE("adam trajectory matches a scalar reference on a quadratic") {
  RandomStream rng(3);
  double x = rng.normal() * 2.0;
  Tensor p({1}, {x});
  std::vector<Tensor*> params{&p};
  AdamState state;
  state.m.push_back(Tensor::zeros({1}));
  state.v.push_back(Tensor::zeros({1}));
  TrainConfig cfg;
  cfg.learning_rate = 0.05;

  oracle::AdamScalarRef ref;
  double rx = x;
  for (int step = 0; step < 10; ++step) {
    const double grad = 2.0 * (p[0] - 3.0);  // d/dx (x-3)^2
    const double rgrad = 2.0 * (rx - 3.0);
    adam_step(params, {Tensor({1}, {grad})}, state, cfg);
    rx = ref.step(rx, rgrad, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps_hat);
    CHECK(p[0] == doctest::Approx(rx).epsilon(1e-12));
  }
}

TEST_CASE("adam rejects mismatched shapes") {
  Tensor p({2});
  std::vector<Tensor*> params{&p};
  AdamState state;
  state.m.push_back(Tensor::zeros({2}));
  state.v.push_back(Tensor::zeros({2}));
  CHECK_THROWS_AS(adam_step(params, {Tensor::zeros({3})}, state, TrainConfig{}), ShapeError);
}

TEST_CASE("training is deterministic given (seed, data, config)") {
  DataSet data = fixtures::separable_32(8, 11);
  Model a = build_binary_cnn(tiny_binary_config(8, 5));
  Model b = build_binary_cnn(tiny_binary_config(8, 5));
  TrainConfig cfg = quick_config(3, 21);

  TrainHistory ha = train(a, data, data, cfg);
  TrainHistory hb = train(b, data, data, cfg);
  CHECK(history_csv(ha) == history_csv(hb));
  CHECK(params_equal(a, b));
}

TEST_CASE("epochs = 0 returns the initial model and empty history") {
  DataSet data = fixtures::separable_32(8, 13);
  Model m = build_binary_cnn(tiny_binary_config(8, 7));
  Model untouched = build_binary_cnn(tiny_binary_config(8, 7));
  TrainConfig cfg = quick_config(0, 1);
  TrainHistory h = train(m, data, data, cfg);
  CHECK(h.epochs.empty());
  CHECK(params_equal(m, untouched));
}

TEST_CASE("loss kind must match the task") {
  DataSet data = fixtures::separable_32(8, 17);
  Model m = build_binary_cnn(tiny_binary_config(8, 3));
  TrainConfig cfg = quick_config(1, 1);
  cfg.loss_kind = LossKind::WeightedBce;
  CHECK_THROWS_WITH_AS(train(m, data, data, cfg), doctest::Contains("does not match task"),
                       ValueError);
  CHECK_THROWS_AS(parse_loss_kind("hinge"), ValueError);
}

TEST_CASE("weighted training requires every class to appear") {
  DataSet data = constant_images({0, 0, 0, 0}, 8);  // no positives at all
  Model m = build_binary_cnn(tiny_binary_config(8, 3));
  TrainConfig cfg = quick_config(1, 1);
  cfg.use_class_weights = true;
  CHECK_THROWS_WITH_AS(train(m, data, data, cfg), doctest::Contains("Disease Present"),
                       ValueError);
}

TEST_CASE("class weights come from the train split only") {
  DataSet train_data = fixtures::imbalanced(60, 12, 8, 31);
  DataSet val_a = fixtures::imbalanced(20, 10, 8, 32);
  DataSet val_b = fixtures::imbalanced(20, 2, 8, 33);  // very different mix

  Model a = build_binary_cnn(tiny_binary_config(8, 9));
  Model b = build_binary_cnn(tiny_binary_config(8, 9));
  TrainConfig cfg = quick_config(2, 41);
  cfg.use_class_weights = true;
  train(a, train_data, val_a, cfg);
  train(b, train_data, val_b, cfg);
  CHECK(params_equal(a, b));  // validation data never leaks into training
}

TEST_CASE("train loss decreases on the separable fixture") {
  DataSet data = fixtures::separable_32(8, 43);
  Model m = build_binary_cnn(tiny_binary_config(8, 2));
  TrainConfig cfg = quick_config(30, 3);
  TrainHistory h = train(m, data, data, cfg);
  CHECK(h.epochs.back().train_loss < h.epochs.front().train_loss);

  // non-increasing when smoothed over 10-epoch windows
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start + 10 <= h.epochs.size(); start += 10) {
    double window = 0.0;
    for (std::size_t i = start; i < start + 10; ++i) window += h.epochs[i].train_loss;
    window /= 10.0;
    CHECK(window <= prev);
    prev = window;
  }
}

TEST_CASE("history rows carry cumulative epoch numbers and csv omits wall time") {
  DataSet data = fixtures::separable_32(8, 47);
  Model m = build_binary_cnn(tiny_binary_config(8, 2));
  AdamState state = AdamState::init_like(m);
  TrainConfig cfg = quick_config(2, 3);
  TrainHistory h1 = train(m, data, data, cfg, &state);
  TrainHistory h2 = train(m, data, data, cfg, &state);
  CHECK(h1.epochs[0].epoch == 1);
  CHECK(h2.epochs[0].epoch == 3);  // counting continues
  const std::string csv = history_csv(h1);
  CHECK(csv.find("wall") == std::string::npos);
  CHECK(csv.rfind("epoch,train_loss,val_loss,val_accuracy,val_mean_auc\n", 0) == 0);
}

TEST_CASE("single-class validation split trains but leaves mean auc empty") {
  DataSet train_data = fixtures::separable_32(8, 91);
  DataSet val_data = constant_images({1, 1, 1}, 8);  // positives only
  Model m = build_binary_cnn(tiny_binary_config(8, 51));
  TrainHistory h = train(m, train_data, val_data, quick_config(2, 5));
  REQUIRE(h.epochs.size() == 2);
  CHECK(!h.epochs[0].val_mean_auc.has_value());
  const std::string csv = history_csv(h);
  CHECK(csv.find('\n') != std::string::npos);  // serializes without a value
}

TEST_CASE("oracle model evaluates to perfect metrics") {
  Model m = oracle_model(6);
  DataSet data = constant_images({1, 0, 1, 0, 1, 1, 0, 0}, 6);
  TrainConfig cfg = quick_config(1, 1);
  MetricsReport r = evaluate(m, data, cfg);
  CHECK(r.accuracy == 1.0);
  REQUIRE(r.per_label.size() == 1);
  CHECK(r.per_label[0].precision == 1.0);
  CHECK(r.per_label[0].recall == 1.0);
  CHECK(r.per_label[0].f1 == 1.0);
  REQUIRE(r.per_label[0].auc.has_value());
  CHECK(*r.per_label[0].auc == 1.0);
  REQUIRE(r.mean_auc.has_value());
  CHECK(*r.mean_auc == 1.0);
}

TEST_CASE("constant-probability model scores chance-level auc") {
  Model m = build_binary_cnn(tiny_binary_config(8, 19));
  auto params = m.parameters();
  Tensor& head_w = *params[params.size() - 2];
  Tensor& head_b = *params[params.size() - 1];
  for (std::size_t i = 0; i < head_w.size(); ++i) head_w[i] = 0.0;
  for (std::size_t i = 0; i < head_b.size(); ++i) head_b[i] = 0.0;

  DataSet data = constant_images({1, 0, 1, 0}, 8);
  MetricsReport r = evaluate(m, data, quick_config(1, 1));
  REQUIRE(r.per_label[0].auc.has_value());
  CHECK(*r.per_label[0].auc == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("evaluate agrees with calling the metrics module directly") {
  DataSet data = fixtures::separable_32(8, 53);
  Model m = build_binary_cnn(tiny_binary_config(8, 23));
  TrainConfig cfg = quick_config(1, 1);
  MetricsReport via_eval = evaluate(m, data, cfg);

  Tensor probs = predict_probs(m, data, cfg.batch_size);
  Tensor col({probs.extent(0), 1});
  for (std::size_t i = 0; i < probs.extent(0); ++i) col.at2(i, 0) = probs.at2(i, 1);
  MetricsReport direct =
      classification_report(col, data.metric_labels(Task::Binary), cfg.threshold,
                            {"Disease Present"});
  CHECK(report_csv(via_eval) == report_csv(direct));
}

TEST_CASE("checkpoint round trip restores everything bit-for-bit") {
  testutil::TempDir tmp;
  DataSet data = fixtures::separable_32(8, 59);
  Model m = build_binary_cnn(tiny_binary_config(8, 29));
  AdamState state = AdamState::init_like(m);
  TrainConfig cfg = quick_config(2, 61);
  train(m, data, data, cfg, &state);

  save_checkpoint(m, state, cfg, tmp.str("ckpt"));
  Checkpoint back = load_checkpoint(tmp.str("ckpt"));
  CHECK(params_equal(m, back.model));
  CHECK(back.state.t == state.t);
  CHECK(back.state.epochs_completed == state.epochs_completed);
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    CHECK(oracle::max_abs_diff(back.state.m[i], state.m[i]) == 0.0);
    CHECK(oracle::max_abs_diff(back.state.v[i], state.v[i]) == 0.0);
  }
  CHECK(back.config.seed == cfg.seed);
  CHECK(back.config.loss_kind == cfg.loss_kind);
}

TEST_CASE("train 3 + resume 2 equals train 5") {
  DataSet data = fixtures::separable_32(8, 67);

  Model full = build_binary_cnn(tiny_binary_config(8, 31));
  AdamState full_state = AdamState::init_like(full);
  TrainConfig cfg5 = quick_config(5, 71);
  TrainHistory h5 = train(full, data, data, cfg5, &full_state);

  testutil::TempDir tmp;
  Model part = build_binary_cnn(tiny_binary_config(8, 31));
  AdamState part_state = AdamState::init_like(part);
  TrainConfig cfg3 = quick_config(3, 71);
  TrainHistory h3 = train(part, data, data, cfg3, &part_state);
  save_checkpoint(part, part_state, cfg3, tmp.str("ckpt"));

  Checkpoint resumed = load_checkpoint(tmp.str("ckpt"));
  TrainConfig cfg2 = resumed.config;
  cfg2.epochs = 2;
  TrainHistory h2 = train(resumed.model, data, data, cfg2, &resumed.state);

  CHECK(params_equal(full, resumed.model));
  CHECK(history_csv(h5) == history_csv(h3) + history_csv(h2).substr(history_csv(h2).find('\n') + 1));
}

TEST_CASE("resumed training also matches on a batchnorm model") {
  DataSet data = fixtures::separable_32(8, 73);
  ModelConfig mc = resnet_tiny_config(Task::Binary, {1, 8, 8});
  mc.seed = 37;

  Model full = build_resnet(mc);
  AdamState full_state = AdamState::init_like(full);
  train(full, data, data, quick_config(3, 79), &full_state);

  testutil::TempDir tmp;
  Model part = build_resnet(mc);
  AdamState part_state = AdamState::init_like(part);
  train(part, data, data, quick_config(2, 79), &part_state);
  save_checkpoint(part, part_state, quick_config(2, 79), tmp.str("ckpt"));
  Checkpoint resumed = load_checkpoint(tmp.str("ckpt"));
  TrainConfig cfg1 = resumed.config;
  cfg1.epochs = 1;
  train(resumed.model, data, data, cfg1, &resumed.state);

  CHECK(params_equal(full, resumed.model));
  auto ba = full.buffers(), bb = resumed.model.buffers();
  REQUIRE(ba.size() == bb.size());
  for (std::size_t i = 0; i < ba.size(); ++i) {
    CHECK(oracle::max_abs_diff(*ba[i], *bb[i]) == 0.0);
  }
}

TEST_CASE("corrupted checkpoints are rejected without partial models") {
  testutil::TempDir tmp;
  Model m = build_binary_cnn(tiny_binary_config(8, 41));
  AdamState state = AdamState::init_like(m);
  save_checkpoint(m, state, quick_config(1, 1), tmp.str("ckpt"));

  SUBCASE("version mismatch") {
    testutil::spit(tmp.str("ckpt/version"), "9\n");
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.str("ckpt")), doctest::Contains("version"), IoError);
  }
  SUBCASE("truncated parameter file") {
    const std::string path = tmp.str("ckpt/params_000.npy");
    const std::string bytes = testutil::slurp(path);
    testutil::spit(path, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(tmp.str("ckpt")), IoError);
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(load_checkpoint(tmp.str("nowhere")), IoError);
  }
}

TEST_CASE("empty datasets are rejected") {
  Model m = build_binary_cnn(tiny_binary_config(8, 43));
  DataSet data = fixtures::separable_32(8, 83);
  CHECK_THROWS_AS(train(m, DataSet{}, data, quick_config(1, 1)), ValueError);
  CHECK_THROWS_AS(train(m, data, DataSet{}, quick_config(1, 1)), ValueError);
  CHECK_THROWS_AS(evaluate(m, DataSet{}, quick_config(1, 1)), ValueError);
}

TEST_CASE("load_dataset reads what ingest-style writers produce") {
  testutil::TempDir tmp;
  std::filesystem::create_directories(tmp.str("images"));
  RandomStream rng(89);
  std::vector<SampleRecord> records;
  for (int i = 0; i < 3; ++i) {
    SampleRecord r;
    r.image_id = "img" + std::to_string(i) + ".png";
    r.patient_id = "P" + std::to_string(i);
    r.labels = fixtures::disease_label(i % 2 == 1);
    records.push_back(r);
    Tensor img = testutil::uniform_tensor({1, 6, 6}, rng);
    std::vector<float> f(img.size());
    for (std::size_t j = 0; j < img.size(); ++j) f[j] = static_cast<float>(img[j]);
    write_npy(tmp.str("images/" + r.image_id + ".npy"), img.shape(), f);
  }
  DataSet data = load_dataset(make_manifest(records), tmp.str("images"));
  CHECK(data.size() == 3);
  CHECK(data.image_shape() == std::array<std::size_t, 3>{1, 6, 6});
  CHECK(derive_binary_label(data.labels[1]) == 1);
}

}  // TEST_SUITE

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cxr/checkpoint.hpp"
#include "cxr/csv.hpp"
#include "cxr/dataset.hpp"
#include "cxr/digest.hpp"
#include "cxr/error.hpp"
#include "cxr/image.hpp"
#include "cxr/losses.hpp"
#include "cxr/metrics.hpp"
#include "cxr/models.hpp"
#include "cxr/npy.hpp"
#include "cxr/pca.hpp"
#include "cxr/svg.hpp"
#include "cxr/trainer.hpp"
#include "cxr/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw cxr::IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw cxr::IoError("write failed for '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw cxr::IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// One manifest per run: command, resolved config, input digests, timestamps.
struct RunManifest {
  std::string command;
  json config = json::object();
  std::vector<std::pair<std::string, std::string>> inputs;
  std::string started = utc_timestamp();

  void add_input(const std::string& path) { inputs.emplace_back(path, cxr::file_digest(path)); }

  void write(const fs::path& dir) const {
    json j;
    j["tool"] = "cxr";
    j["version"] = cxr::kVersion;
    j["command"] = command;
    j["config"] = config;
    json ins = json::array();
    for (const auto& [path, digest] : inputs) ins.push_back({{"path", path}, {"digest", digest}});
    j["inputs"] = ins;
    j["started_utc"] = started;
    j["finished_utc"] = utc_timestamp();
    fs::create_directories(dir);
    write_text(dir / "run_manifest.json", j.dump(2) + "\n");
  }
};

std::vector<float> to_f32(const cxr::Tensor& t) {
  std::vector<float> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<float>(t[i]);
  return out;
}

// ----------------------------------------------------------------------
// ingest

struct IngestArgs {
  std::string metadata;
  std::string image_dir;
  std::string out_dir;
  std::size_t subset = 0;
  std::uint64_t seed = 0;
  std::string split = "0.8,0.1,0.1";
  std::size_t image_size = 256;
};

cxr::SplitSpec parse_split(const std::string& text, std::uint64_t seed) {
  std::istringstream is(text);
  std::string tok;
  std::vector<double> fractions;
  while (std::getline(is, tok, ',')) fractions.push_back(std::stod(tok));
  if (fractions.size() != 3) {
    throw cxr::ParseError("--split wants three comma-separated fractions, got '" + text + "'");
  }
  if (fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0 ||
      std::fabs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw cxr::ParseError("--split fractions must be non-negative and sum to 1, got '" + text +
                          "'");
  }
  return cxr::SplitSpec{fractions[0], fractions[1], fractions[2], seed};
}

fs::path resolve_image_path(const fs::path& dir, const std::string& image_id) {
  const fs::path direct = dir / image_id;
  if (fs::exists(direct)) return direct;
  const fs::path stem = dir / fs::path(image_id).stem();
  for (const char* ext : {".npy", ".pgm"}) {
    fs::path candidate = direct;
    candidate += ext;
    if (fs::exists(candidate)) return candidate;
    candidate = stem;
    candidate += ext;
    if (fs::exists(candidate)) return candidate;
  }
  return {};
}

void cmd_ingest(const IngestArgs& args) {
  RunManifest run;
  run.command = "ingest";
  run.config = {{"metadata", args.metadata}, {"image_dir", args.image_dir},
                {"out_dir", args.out_dir},   {"subset", args.subset},
                {"seed", args.seed},         {"split", args.split},
                {"image_size", args.image_size}};
  run.add_input(args.metadata);

  cxr::DatasetManifest manifest = cxr::make_manifest(cxr::parse_metadata(read_text(args.metadata)));
  if (args.subset > 0) manifest = cxr::subsample(manifest, args.subset, args.seed);

  // Locate every source image up front; missing files are a hard stop.
  std::vector<fs::path> sources;
  std::vector<std::string> missing;
  for (const cxr::SampleRecord& r : manifest.records) {
    fs::path p = resolve_image_path(args.image_dir, r.image_id);
    if (p.empty()) missing.push_back(r.image_id);
    sources.push_back(p);
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "missing image files under '" << args.image_dir << "':";
    for (const std::string& id : missing) os << " " << id;
    throw cxr::MissingDataError(os.str());
  }

  const cxr::SplitResult split = cxr::patient_split(manifest, parse_split(args.split, args.seed));

  const fs::path out(args.out_dir);
  fs::create_directories(out / "images");
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    cxr::Tensor img = cxr::load_image(sources[i].string());
    img = cxr::resize_image(img, args.image_size, args.image_size);
    cxr::write_npy((out / "images" / (manifest.records[i].image_id + ".npy")).string(),
                   img.shape(), to_f32(img));
  }

  cxr::write_manifest_csv((out / "manifest_train.csv").string(), split.train, "train");
  cxr::write_manifest_csv((out / "manifest_val.csv").string(), split.val, "val");
  cxr::write_manifest_csv((out / "manifest_test.csv").string(), split.test, "test");
  write_text(out / "demographics.txt", cxr::demographics_text(manifest));
  write_text(out / "demographics.csv", cxr::demographics_csv(manifest));

  std::cout << "ingested " << manifest.total() << " images (" << split.train.total() << " train, "
            << split.val.total() << " val, " << split.test.total() << " test)\n";
  run.write(out);
}

// ----------------------------------------------------------------------
// pca

struct PcaArgs {
  std::string input;
  std::string out_dir;
  std::size_t components = 0;
  double threshold = 0.0;
};

void pca_one_image(const fs::path& path, const PcaArgs& args, RunManifest& run) {
  const cxr::Tensor image = cxr::load_image(path.string());
  const std::size_t C = image.extent(0), H = image.extent(1), W = image.extent(2);
  const std::string stem = path.stem().string();
  const fs::path out(args.out_dir);

  if (args.components > 0 && args.components > std::min(H, W)) {
    throw cxr::ParseError("--components " + std::to_string(args.components) +
                          " out of range for " + std::to_string(H) + "x" + std::to_string(W) +
                          " channels (valid range: 1.." + std::to_string(std::min(H, W)) + ")");
  }

  std::ostringstream curve_csv;
  curve_csv.precision(17);
  curve_csv << "channel,k,cumulative_variance_ratio\n";
  std::vector<cxr::SvgSeries> series;
  json channel_report = json::array();
  for (std::size_t c = 0; c < C; ++c) {
    cxr::Tensor channel({H, W});
    std::copy(image.data() + c * H * W, image.data() + (c + 1) * H * W, channel.data());
    const cxr::ChannelPca pca = cxr::fit_channel_pca(channel);
    const auto curve = cxr::variance_curve(pca);

    cxr::SvgSeries s;
    s.name = "channel " + std::to_string(c);
    for (const auto& [k, ratio] : curve) {
      curve_csv << c << "," << k << "," << ratio << "\n";
      s.points.emplace_back(static_cast<double>(k), ratio);
    }
    series.push_back(std::move(s));

    json entry = {{"channel", c}, {"rank", pca.rank()}};
    if (args.threshold > 0.0) {
      const std::size_t k = cxr::components_for_variance(pca, args.threshold);
      entry["components_for_threshold"] = k;
      std::cout << stem << " channel " << c << ": k=" << k << " components reach variance "
                << args.threshold << "\n";
    }
    channel_report.push_back(entry);
  }

  write_text(out / (stem + "_variance.csv"), curve_csv.str());
  const double max_k = static_cast<double>(std::min(H, W));
  write_text(out / (stem + "_variance.svg"),
             cxr::line_plot_svg(series, "PCA variance retention: " + stem, "components",
                                "cumulative variance ratio", {1.0, std::max(2.0, max_k)},
                                {0.0, 1.0}));

  if (args.components > 0) {
    const cxr::CompressedImage compressed = cxr::compress(image, args.components);
    cxr::save_compressed(compressed, (out / (stem + "_compressed")).string());
  }
  run.config["images"].push_back({{"input", path.string()}, {"channels", channel_report}});
}

void cmd_pca(const PcaArgs& args) {
  if (args.threshold < 0.0 || args.threshold > 1.0) {
    throw cxr::ParseError("--threshold must lie in (0, 1], got " +
                          std::to_string(args.threshold));
  }
  RunManifest run;
  run.command = "pca";
  run.config = {{"input", args.input},
                {"out_dir", args.out_dir},
                {"components", args.components},
                {"threshold", args.threshold},
                {"images", json::array()}};

  std::vector<fs::path> paths;
  if (fs::is_directory(args.input)) {
    for (const auto& entry : fs::directory_iterator(args.input)) {
      const std::string ext = entry.path().extension().string();
      if (ext == ".npy" || ext == ".pgm") paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) {
      throw cxr::MissingDataError("no .npy or .pgm images under '" + args.input + "'");
    }
  } else if (fs::exists(args.input)) {
    paths.push_back(args.input);
  } else {
    throw cxr::MissingDataError("input '" + args.input + "' does not exist");
  }

  fs::create_directories(args.out_dir);
  for (const fs::path& p : paths) {
    run.add_input(p.string());
    pca_one_image(p, args, run);
  }
  run.write(args.out_dir);
}

// ----------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data_dir;
  std::string out_dir;
  std::string task = "binary";
  std::string model = "baseline";
  bool weighted = false;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  std::size_t batch_size = 8;
  double lr = 0.001;
  double threshold = 0.5;
  std::string loss;  // empty: default for the task
  std::string config_file;
};

cxr::ModelConfig model_config_for(const std::string& model, cxr::Task task,
                                  std::array<std::size_t, 3> input_shape, std::uint64_t seed) {
  cxr::ModelConfig cfg;
  if (model == "baseline" || model == "optimized") {
    if (task != cxr::Task::Binary) {
      throw cxr::ParseError("--model " + model + " has a 2-way softmax head; it only supports "
                            "--task binary (use --model multilabel or a resnet preset)");
    }
    cfg = model == "baseline" ? cxr::binary_baseline_config(input_shape)
                              : cxr::binary_optimized_config(input_shape);
  } else if (model == "multilabel") {
    if (task != cxr::Task::Multilabel) {
      throw cxr::ParseError("--model multilabel has a 14-way sigmoid head; it requires "
                            "--task multilabel");
    }
    cfg = cxr::multilabel_cnn_config(input_shape);
  } else if (model == "resnet-tiny") {
    cfg = cxr::resnet_tiny_config(task, input_shape);
  } else if (model == "resnet50") {
    cfg = cxr::resnet50_config(task, input_shape);
  } else {
    throw cxr::ParseError("unknown --model '" + model +
                          "' (want baseline, optimized, multilabel, resnet-tiny or resnet50)");
  }
  cfg.seed = seed;
  return cfg;
}

void cmd_train(const TrainArgs& args) {
  RunManifest run;
  run.command = "train";
  run.config = {{"data_dir", args.data_dir}, {"out_dir", args.out_dir},
                {"task", args.task},         {"model", args.model},
                {"weighted", args.weighted}, {"epochs", args.epochs},
                {"seed", args.seed},         {"batch_size", args.batch_size},
                {"lr", args.lr},             {"threshold", args.threshold}};

  const fs::path data(args.data_dir);
  const std::string train_csv = (data / "manifest_train.csv").string();
  const std::string val_csv = (data / "manifest_val.csv").string();
  run.add_input(train_csv);
  run.add_input(val_csv);

  const cxr::Task task = cxr::parse_task(args.task);
  const cxr::DatasetManifest train_manifest = cxr::read_manifest_csv(train_csv);
  const cxr::DatasetManifest val_manifest = cxr::read_manifest_csv(val_csv);
  const std::string image_dir = (data / "images").string();
  const cxr::DataSet train_data = cxr::load_dataset(train_manifest, image_dir);
  const cxr::DataSet val_data = cxr::load_dataset(val_manifest, image_dir);

  cxr::Model model = cxr::build_model(
      model_config_for(args.model, task, train_data.image_shape(), args.seed));

  cxr::TrainConfig cfg;
  cfg.learning_rate = args.lr;
  cfg.batch_size = args.batch_size;
  cfg.epochs = args.epochs;
  cfg.seed = args.seed;
  cfg.loss_kind = args.loss.empty() ? cxr::default_loss_kind(task) : cxr::parse_loss_kind(args.loss);
  cfg.use_class_weights = args.weighted;
  cfg.threshold = args.threshold;
  run.config["loss"] = cxr::loss_kind_name(cfg.loss_kind);
  run.config["batch_reduction"] = "mean";

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  if (args.weighted) {
    const cxr::ClassWeights weights = cxr::training_class_weights(train_data, task);
    write_text(out / "class_weights.csv",
               cxr::class_weights_csv(weights, cxr::task_class_names(task)));
  }

  cxr::AdamState state = cxr::AdamState::init_like(model);
  const cxr::TrainHistory history = cxr::train(model, train_data, val_data, cfg, &state);

  cxr::save_checkpoint(model, state, cfg, (out / "checkpoint").string());
  write_text(out / "history.csv", cxr::history_csv(history));

  if (!history.epochs.empty()) {
    const auto& last = history.epochs.back();
    std::cout << "epoch " << last.epoch << ": train loss " << last.train_loss << ", val loss "
              << last.val_loss << ", val accuracy " << last.val_accuracy << "\n";
  }
  std::cout << "checkpoint written to " << (out / "checkpoint").string() << "\n";
  run.write(out);
}

// ----------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string image_dir;
  std::string out_dir = ".";
  double threshold = 0.0;  // 0: keep the checkpoint's threshold
  std::string roc;
  std::string report;
};

void write_roc_artifacts(const std::string& base, const std::string& label,
                         const cxr::RocCurve& curve, bool suffix_label) {
  fs::path svg_path(base);
  if (suffix_label) {
    std::string name = svg_path.stem().string() + "_" + label;
    std::replace(name.begin(), name.end(), ' ', '_');
    svg_path = svg_path.parent_path() / (name + svg_path.extension().string());
  }
  fs::path csv_path = svg_path;
  csv_path.replace_extension(".csv");
  write_text(svg_path, cxr::roc_svg(curve, "ROC: " + label));
  write_text(csv_path, cxr::roc_csv(curve));
}

void cmd_eval(const EvalArgs& args) {
  RunManifest run;
  run.command = "eval";
  run.config = {{"checkpoint", args.checkpoint}, {"manifest", args.manifest},
                {"image_dir", args.image_dir},   {"threshold", args.threshold},
                {"roc", args.roc},               {"report", args.report},
                {"out_dir", args.out_dir}};

  cxr::Checkpoint ckpt = cxr::load_checkpoint(args.checkpoint);
  run.add_input(args.manifest);

  const std::string image_dir = args.image_dir.empty()
                                    ? (fs::path(args.manifest).parent_path() / "images").string()
                                    : args.image_dir;
  const cxr::DatasetManifest manifest = cxr::read_manifest_csv(args.manifest);
  const cxr::DataSet data = cxr::load_dataset(manifest, image_dir);

  cxr::TrainConfig cfg = ckpt.config;
  if (args.threshold > 0.0) cfg.threshold = args.threshold;

  const cxr::MetricsReport report = cxr::evaluate(ckpt.model, data, cfg);
  std::cout << cxr::report_text(report);
  if (!args.report.empty()) write_text(args.report, cxr::report_csv(report));

  if (!args.roc.empty()) {
    const cxr::Task task = ckpt.model.config.task;
    const cxr::Tensor probs = cxr::predict_probs(ckpt.model, data, cfg.batch_size);
    const cxr::Tensor labels = data.metric_labels(task);
    if (task == cxr::Task::Binary) {
      std::vector<double> scores(data.size());
      std::vector<int> truth(data.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        scores[i] = probs.at2(i, 1);
        truth[i] = labels.at2(i, 0) != 0.0 ? 1 : 0;
      }
      write_roc_artifacts(args.roc, "Disease Present", cxr::roc_curve(scores, truth), false);
    } else {
      for (std::size_t c = 0; c < cxr::kNumLabels; ++c) {
        std::vector<double> scores(data.size());
        std::vector<int> truth(data.size());
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < data.size(); ++i) {
          scores[i] = probs.at2(i, c);
          truth[i] = labels.at2(i, c) != 0.0 ? 1 : 0;
          (truth[i] ? has_pos : has_neg) = true;
        }
        const std::string& label = cxr::label_space()[c];
        if (!has_pos || !has_neg) {
          std::cout << "skipping ROC for single-class label " << label << "\n";
          continue;
        }
        write_roc_artifacts(args.roc, label, cxr::roc_curve(scores, truth), true);
      }
    }
  }
  run.write(args.out_dir);
}

// Applies JSON config-file values for flags the user did not pass on the
// command line; explicit flags win.
void apply_config_file(const CLI::App* sub, TrainArgs& args) {
  if (args.config_file.empty()) return;
  json j;
  try {
    j = json::parse(read_text(args.config_file));
  } catch (const json::parse_error& e) {
    throw cxr::ParseError("config file '" + args.config_file + "': " + e.what());
  }
  auto unused = [&](const char* flag) { return sub->count(flag) == 0; };
  if (j.contains("task") && unused("--task")) args.task = j["task"].get<std::string>();
  if (j.contains("model") && unused("--model")) args.model = j["model"].get<std::string>();
  if (j.contains("weighted") && unused("--weighted")) args.weighted = j["weighted"].get<bool>();
  if (j.contains("epochs") && unused("--epochs")) args.epochs = j["epochs"].get<std::size_t>();
  if (j.contains("seed") && unused("--seed")) args.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("batch-size") && unused("--batch-size")) {
    args.batch_size = j["batch-size"].get<std::size_t>();
  }
  if (j.contains("lr") && unused("--lr")) args.lr = j["lr"].get<double>();
  if (j.contains("threshold") && unused("--threshold")) {
    args.threshold = j["threshold"].get<double>();
  }
  if (j.contains("loss") && unused("--loss")) args.loss = j["loss"].get<std::string>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cxray: from-scratch CNN toolkit for chest x-ray classification"};
  app.set_version_flag("--version", std::string(cxr::kVersion));
  app.require_subcommand(1);

  IngestArgs ingest_args;
  CLI::App* ingest = app.add_subcommand(
      "ingest", "Parse metadata, resize images, split by patient, write manifests");
  ingest->add_option("metadata", ingest_args.metadata, "Metadata CSV")->required();
  ingest->add_option("image-dir", ingest_args.image_dir, "Directory of source images")->required();
  ingest->add_option("out-dir", ingest_args.out_dir, "Output directory")->required();
  ingest->add_option("--subset", ingest_args.subset, "Keep a seeded uniform subsample of N images");
  ingest->add_option("--seed", ingest_args.seed, "Seed for subsampling and splitting");
  ingest->add_option("--split", ingest_args.split, "train,val,test fractions (default 0.8,0.1,0.1)");
  ingest->add_option("--image-size", ingest_args.image_size, "Resize target (default 256)");
  ingest->callback([&] { cmd_ingest(ingest_args); });

  PcaArgs pca_args;
  CLI::App* pca = app.add_subcommand("pca", "Per-channel PCA variance analysis and compression");
  pca->add_option("input", pca_args.input, "Image file or directory (.npy / .pgm)")->required();
  pca->add_option("out-dir", pca_args.out_dir, "Output directory")->required();
  pca->add_option("--components", pca_args.components, "Compress with K components per channel");
  pca->add_option("--threshold", pca_args.threshold,
                  "Report the component count reaching this cumulative variance (0,1]");
  pca->callback([&] { cmd_pca(pca_args); });

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model on an ingested dataset");
  train->add_option("data-dir", train_args.data_dir, "Directory produced by ingest")->required();
  train->add_option("out-dir", train_args.out_dir, "Output directory")->required();
  train->add_option("--task", train_args.task, "binary | multilabel");
  train->add_option("--model", train_args.model,
                    "baseline | optimized | multilabel | resnet-tiny | resnet50");
  train->add_flag("--weighted", train_args.weighted, "Use inverse-frequency class weights");
  train->add_option("--epochs", train_args.epochs, "Training epochs");
  train->add_option("--seed", train_args.seed, "Seed for init and shuffling");
  train->add_option("--batch-size", train_args.batch_size, "Mini-batch size");
  train->add_option("--lr", train_args.lr, "Adam learning rate");
  train->add_option("--threshold", train_args.threshold, "Decision threshold for validation");
  train->add_option("--loss", train_args.loss, "eq1-softmax | weighted-bce (default per task)");
  train->add_option("--config", train_args.config_file,
                    "JSON config mirroring flag names; flags take precedence");
  train->callback([&] {
    apply_config_file(train, train_args);
    cmd_train(train_args);
  });

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  eval->add_option("checkpoint", eval_args.checkpoint, "Checkpoint directory")->required();
  eval->add_option("manifest", eval_args.manifest, "Manifest CSV")->required();
  eval->add_option("--image-dir", eval_args.image_dir,
                   "Image directory (default: <manifest dir>/images)");
  eval->add_option("--out-dir", eval_args.out_dir, "Directory for the run manifest (default .)");
  eval->add_option("--threshold", eval_args.threshold, "Decision threshold override");
  eval->add_option("--roc", eval_args.roc, "Write ROC SVG (and CSV) to this path");
  eval->add_option("--report", eval_args.report, "Write the metrics report CSV to this path");
  eval->callback([&] { cmd_eval(eval_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const cxr::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const cxr::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const cxr::MissingDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const cxr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

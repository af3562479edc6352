#include "kpx/cli/app.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <openssl/evp.h>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "kpx/cli/svg.hpp"
#include "kpx/encoders/encoders.hpp"
#include "kpx/scenario/dataset_io.hpp"
#include "kpx/scenario/generator.hpp"
#include "kpx/training/evaluate.hpp"
#include "kpx/training/trainer.hpp"

namespace kpx::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IncompatibleArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args)
      : start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["args"] = args;
    j_["inputs"] = json::object();
    j_["outputs"] = json::object();
  }
  void input(const std::string& role, const fs::path& p) {
    j_["inputs"][role] = {{"path", p.string()}, {"sha256", file_digest(p)}};
  }
  void output(const std::string& role, const fs::path& p) {
    j_["outputs"][role] = {{"path", p.string()}, {"sha256", file_digest(p)}};
  }
  void set(const std::string& key, json value) { j_[key] = std::move(value); }
  void write(const fs::path& dir) {
    j_["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_text(dir / "manifest.json", j_.dump(2) + "\n");
  }

  static void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw scenario::IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw scenario::IoError("failed writing " + path.string());
  }

 private:
  json j_;
  std::chrono::steady_clock::time_point start_;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw scenario::IoError("cannot create output directory " + dir.string());
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("KPX_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return seed;
  } catch (const std::exception&) {
    throw UsageError(fmt::format("KPX_SEED must be an unsigned integer, got '{}'", v));
  }
}

scenario::Dataset load_dataset(const fs::path& path) { return scenario::read_dataset_file(path); }

training::Checkpoint load_checkpoint(const fs::path& path, const scenario::Dataset& data) {
  auto ck = training::read_checkpoint_file(path.string());
  if (ck.model.heads.joints != data.skeleton.joint_count()) {
    throw IncompatibleArtifact(fmt::format("checkpoint expects {} joints, dataset has {}", ck.model.heads.joints,
                                           data.skeleton.joint_count()));
  }
  return ck;
}

// ---- gen-data -------------------------------------------------------------

struct GenArgs {
  std::size_t n = 1000;
  std::string mix = "paper";
  std::optional<std::uint64_t> seed;
  fs::path out;
};

void gen_data(const GenArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  if (a.n == 0) throw UsageError("--n must be positive");
  scenario::KindMix mix;
  try {
    mix = scenario::parse_mix(a.mix);
  } catch (const std::invalid_argument& e) {
    throw UsageError(fmt::format("bad --mix: {}", e.what()));
  }
  const std::uint64_t seed = a.seed ? *a.seed : env_seed().value_or(0);
  ensure_dir(a.out);
  const fs::path file = a.out / "dataset.jsonl";
  scenario::generate_dataset(a.n, mix, seed, file);

  Manifest m("gen-data", args);
  m.set("seed", seed);
  m.set("config", {{"n", a.n}, {"mix", a.mix}, {"positive_fraction", mix.positive_fraction()}});
  m.output("dataset", file);
  m.write(a.out);
  fmt::print(out, "wrote {} scenes to {}\n", a.n, file.string());
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  fs::path data;
  fs::path config;
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> threads;
  std::vector<std::string> sets;
  bool quiet = false;
};

training::TrainConfig resolve_train_config(const TrainArgs& a) {
  training::TrainConfig c;
  if (auto s = env_seed()) c.seed = *s;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw scenario::IoError("cannot open config " + a.config.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError(fmt::format("config {} is not valid JSON: {}", a.config.string(), e.what()));
    }
    c = training::train_config_from_json(j, c);
  }
  json overrides = json::object();
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + kv);
    const std::string value = kv.substr(eq + 1);
    json parsed = json::parse(value, nullptr, false);
    overrides[kv.substr(0, eq)] = parsed.is_discarded() ? json(value) : parsed;
  }
  if (a.seed) overrides["seed"] = *a.seed;
  if (a.epochs) overrides["epochs"] = *a.epochs;
  if (a.batch_size) overrides["batch_size"] = *a.batch_size;
  if (a.threads) overrides["threads"] = *a.threads;
  c = training::train_config_from_json(overrides, c);
  c.validate();
  return c;
}

int train_cmd(const TrainArgs& a, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto config = resolve_train_config(a);
  const auto data = load_dataset(a.data);
  ensure_dir(a.out);
  const fs::path ckpt = a.out / "model.kpxf";
  const fs::path log_path = a.out / "train_log.csv";
  const fs::path config_path = a.out / "train_config.json";
  const auto model = config.model();

  Manifest m("train", args);
  m.set("seed", config.seed);
  m.set("config", training::to_json(config));
  m.set("model", training::to_json(model));
  m.input("data", a.data);
  if (!a.config.empty()) m.input("config", a.config);

  auto finish = [&](const ad::ParamStore& params, const training::TrainLog& log) {
    training::write_checkpoint_file(ckpt.string(), model, params);
    std::ofstream csv(log_path);
    if (!csv) throw scenario::IoError("cannot open " + log_path.string());
    training::write_train_log_csv(csv, log);
    csv.close();
    Manifest::write_text(config_path, training::to_json(config).dump(2) + "\n");
    m.set("final_metrics", log.final_metrics);
    m.output("checkpoint", ckpt);
    m.output("train_log", log_path);
    m.output("train_config", config_path);
    m.write(a.out);
  };

  try {
    auto result = training::train(data, config, [&](const training::EpochRecord& r) {
      if (!a.quiet) {
        fmt::print(out, "epoch {:>3} lr {:.5f} total {:.4f} val {:.4f} ({:.1f}s)\n", r.epoch, r.lr, r.total,
                   r.val_total, r.wall_seconds);
        out.flush();
      }
    });
    finish(result.params, result.log);
  } catch (const training::TrainingDiverged& e) {
    m.set("diverged", e.what());
    finish(e.last_good(), e.log());
    fmt::print(err, "error: training diverged: {}; last good parameters saved to {}\n", e.what(), ckpt.string());
    return kFailure;
  }
  fmt::print(out, "wrote {}\n", ckpt.string());
  return kOk;
}

// ---- eval / infer / plot ------------------------------------------------

struct ModelArgs {
  fs::path data;
  fs::path ckpt;
  fs::path out;
  std::size_t scene_index = 0;
};

void eval_cmd(const ModelArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto data = load_dataset(a.data);
  const auto ck = load_checkpoint(a.ckpt, data);
  ensure_dir(a.out);
  const auto ev = training::evaluate(ck.params, ck.model, data);
  const fs::path json_path = a.out / "report.json";
  const fs::path csv_path = a.out / "report.csv";
  Manifest::write_text(json_path, metrics::to_json(ev.report).dump(2) + "\n");
  Manifest::write_text(csv_path, metrics::csv_header(ev.report) + "\n" + metrics::csv_row(ev.report) + "\n");

  Manifest m("eval", args);
  m.set("model", training::to_json(ck.model));
  m.input("data", a.data);
  m.input("checkpoint", a.ckpt);
  m.output("report", json_path);
  m.output("report_csv", csv_path);
  m.write(a.out);
  const auto& c = ev.report.classification;
  fmt::print(out, "acc {:.4f} auc_pr {:.4f} minADE{} {:.4f} minFDE{} {:.4f}\n", c.acc, c.auc_pr, ev.report.k,
             ev.report.min_ade_k(), ev.report.k, ev.report.min_fde_k());
}

json point_list(const std::vector<scenario::Point2>& pts) {
  json arr = json::array();
  for (const auto& p : pts) arr.push_back({p[0], p[1]});
  return arr;
}

void infer_cmd(const ModelArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto data = load_dataset(a.data);
  const auto ck = load_checkpoint(a.ckpt, data);
  ensure_dir(a.out);
  const fs::path path = a.out / "predictions.jsonl";
  std::ofstream file(path, std::ios::binary);
  if (!file) throw scenario::IoError("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < data.scenes.size(); ++i) {
    const auto& scene = data.scenes[i];
    const auto p = training::predict(ck.params, scene, data.skeleton, ck.model);
    const auto frame = encoders::target_frame(scene);
    json hyps = json::array();
    for (std::size_t h = 0; h < p.hypotheses.trajectories.size(); ++h) {
      std::vector<scenario::Point2> world;
      for (const auto& q : p.hypotheses.trajectories[h]) world.push_back(frame.to_world(q));
      hyps.push_back({{"score", p.hypotheses.scores[h]},
                      {"trajectory", point_list(world)},
                      {"trajectory_local", point_list(p.hypotheses.trajectories[h])}});
    }
    json line = {{"scene", i},
                 {"crossing_probability", p.crossing_probability},
                 {"frame", {{"origin", {frame.origin()[0], frame.origin()[1]}}, {"heading", frame.heading()}}},
                 {"hypotheses", hyps}};
    file << line.dump() << "\n";
  }
  file.close();
  if (!file) throw scenario::IoError("failed writing " + path.string());

  Manifest m("infer", args);
  m.input("data", a.data);
  m.input("checkpoint", a.ckpt);
  m.output("predictions", path);
  m.write(a.out);
  fmt::print(out, "wrote predictions for {} scenes to {}\n", data.scenes.size(), path.string());
}

void plot_cmd(const ModelArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto data = load_dataset(a.data);
  if (a.scene_index >= data.scenes.size()) {
    throw UsageError(fmt::format("--scene-index {} out of range (dataset has {} scenes)", a.scene_index,
                                 data.scenes.size()));
  }
  const auto ck = load_checkpoint(a.ckpt, data);
  ensure_dir(a.out);
  const auto& scene = data.scenes[a.scene_index];
  const auto p = training::predict(ck.params, scene, data.skeleton, ck.model);
  const fs::path path = a.out / fmt::format("scene_{}.svg", a.scene_index);
  Manifest::write_text(path, render_scene_svg(scene, data.skeleton, p));

  Manifest m("plot", args);
  m.set("scene_index", a.scene_index);
  m.input("data", a.data);
  m.input("checkpoint", a.ckpt);
  m.output("figure", path);
  m.write(a.out);
  fmt::print(out, "wrote {}\n", path.string());
}

}  // namespace

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw scenario::IoError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in.read(buf.data(), static_cast<std::streamsize>(buf.size())) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pedestrian crossing and trajectory prediction from 3D keypoints"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic scene dataset");
  gen_cmd->add_option("--n", gen.n, "Number of scenes")->capture_default_str();
  gen_cmd->add_option("--mix", gen.mix,
                      "Scenario mix: 'uniform', 'paper' or kind=weight,... over cross_walkway, cross_jaywalk, "
                      "parallel_sidewalk, stand_at_curb, bend_down_on_road, wave_then_cross")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Seed (default: $KPX_SEED, else 0)");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_sub = app.add_subcommand(
      "train", "Train a model. Settings resolve as: flags > --config file > $KPX_SEED (seed only) > defaults");
  train_sub->add_option("--data", tr.data, "Dataset file")->required();
  train_sub->add_option("--config", tr.config, "JSON file with TrainConfig fields");
  train_sub->add_option("--out", tr.out, "Output directory")->required();
  train_sub->add_option("--seed", tr.seed, "Seed");
  train_sub->add_option("--epochs", tr.epochs, "Epochs");
  train_sub->add_option("--batch-size", tr.batch_size, "Batch size");
  train_sub->add_option("--threads", tr.threads, "Worker threads per batch");
  train_sub->add_option("--set", tr.sets, "Override any TrainConfig field, e.g. --set lambda_kjp=0");
  train_sub->add_flag("--quiet", tr.quiet, "Do not print per-epoch progress");

  ModelArgs ev, inf, pl;
  auto* eval_sub = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_sub->add_option("--data", ev.data, "Dataset file")->required();
  eval_sub->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  eval_sub->add_option("--report", ev.out, "Output directory for the report")->required();

  auto* infer_sub = app.add_subcommand("infer", "Write per-scene hypotheses and crossing probabilities");
  infer_sub->add_option("--data", inf.data, "Dataset file")->required();
  infer_sub->add_option("--ckpt", inf.ckpt, "Checkpoint file")->required();
  infer_sub->add_option("--out", inf.out, "Output directory")->required();

  auto* plot_sub = app.add_subcommand("plot", "Export an SVG of one scene with its predictions");
  plot_sub->add_option("--data", pl.data, "Dataset file")->required();
  plot_sub->add_option("--ckpt", pl.ckpt, "Checkpoint file")->required();
  plot_sub->add_option("--scene-index", pl.scene_index, "Scene to draw")->required();
  plot_sub->add_option("--out", pl.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kUsage;
  }

  try {
    if (*gen_cmd) gen_data(gen, args, out);
    if (*train_sub) return train_cmd(tr, args, out, err);
    if (*eval_sub) eval_cmd(ev, args, out);
    if (*infer_sub) infer_cmd(inf, args, out);
    if (*plot_sub) plot_cmd(pl, args, out);
    return kOk;
  } catch (const UsageError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kUsage;
  } catch (const std::invalid_argument& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kUsage;
  } catch (const IncompatibleArtifact& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kIncompatible;
  } catch (const training::IncompatibleCheckpoint& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kIncompatible;
  } catch (const scenario::IncompatibleDataset& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kIncompatible;
  } catch (const training::CheckpointError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kIo;
  } catch (const scenario::FormatError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kIo;
  } catch (const scenario::IoError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kIo;
  }
}

}  // namespace kpx::cli

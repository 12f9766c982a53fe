// deeptwist: command line front end for training, compression-aware
// training, one-shot decomposition and the ratio / tiling studies.
//
// Exit codes: 0 success, 1 argument error, 2 format / numerical / IO error.

#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "deeptwist/errors.hpp"
#include "deeptwist/io.hpp"
#include "deeptwist/lowrank.hpp"
#include "deeptwist/trainer.hpp"

namespace dt = deeptwist;
namespace fs = std::filesystem;

namespace {

constexpr int kExitArgument = 1;
constexpr int kExitRuntime = 2;

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Every documented config key with its default. Flags and the config file
// both write into this table; unknown config keys are rejected.
const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d = {
      {"dataset", "synth"},  // synth | idx | cifar10
      {"train_images", ""},
      {"train_labels", ""},
      {"test_images", ""},
      {"test_labels", ""},
      {"train_cifar", ""},
      {"test_cifar", ""},
      {"synth_classes", "3"},
      {"synth_size", "8"},
      {"synth_channels", "1"},
      {"synth_train", "3000"},
      {"synth_test", "300"},
      {"synth_probe", "300"},
      {"synth_noise", "1.0"},
      {"synth_separation", "0.3"},
      {"model", "toy_cnn"},
      {"width1", "16"},
      {"width2", "16"},
      {"checkpoint", ""},
      {"seed", "1"},
      {"out", "run"},
      {"steps", "3000"},
      {"sd", "200"},
      {"batch", "32"},
      {"momentum", "0"},
      {"weight_decay", "0"},
      {"schedule", "0.05:12,0.01:10,0.002:10"},
      {"method", "tucker"},
      {"rc", "0.5"},
      {"rank", "1"},
      {"tile", "64x64"},
      {"min_in_channels", "16"},
      {"probe_size", "512"},
  };
  return d;
}

struct Settings {
  std::map<std::string, std::string> values = defaults();
  std::map<std::string, std::string> input_hashes;  // label → git blob hash

  const std::string& str(const std::string& key) const { return values.at(key); }

  std::size_t size(const std::string& key) const {
    const std::string& v = str(key);
    std::size_t used = 0;
    unsigned long long n = 0;
    try {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      n = std::stoull(v, &used);
    } catch (const std::logic_error&) {
      throw dt::ArgumentError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    if (used != v.size()) throw dt::ArgumentError(key + ": expected a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(n);
  }

  double real(const std::string& key) const {
    const std::string& v = str(key);
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(v, &used);
    } catch (const std::logic_error&) {
      throw dt::ArgumentError(key + ": expected a number, got '" + v + "'");
    }
    if (used != v.size()) throw dt::ArgumentError(key + ": expected a number, got '" + v + "'");
    return x;
  }

  void hash_input(const std::string& label, const fs::path& path) {
    const auto bytes = dt::read_file_bytes(path);
    input_hashes[label] = dt::git_blob_hash(std::string(bytes.begin(), bytes.end()));
  }
};

dt::TileDims parse_tile(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    const std::size_t h = std::stoul(text.substr(0, x)), w = std::stoul(text.substr(x + 1));
    if (h == 0 || w == 0) throw std::invalid_argument(text);
    return {h, w};
  } catch (const std::logic_error&) {
    throw dt::ArgumentError("tile: expected HxW with positive sizes, got '" + text + "'");
  }
}

std::vector<dt::TileDims> parse_tiles(const std::string& text) {
  std::vector<dt::TileDims> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_tile(item));
  if (out.empty()) throw dt::ArgumentError("tiles: empty list");
  return out;
}

dt::CompressionSpec compression_of(const Settings& s) {
  dt::CompressionSpec c;
  c.method = dt::parse_method(s.str("method"));
  c.rc = s.real("rc");
  c.rank = s.size("rank");
  const auto tile = parse_tile(s.str("tile"));
  c.tile_h = tile.h;
  c.tile_w = tile.w;
  c.min_in_channels = s.size("min_in_channels");
  c.validate();
  return c;
}

dt::DeepTwistConfig config_of(const Settings& s) {
  dt::DeepTwistConfig cfg;
  cfg.sd = s.size("sd");
  cfg.total_steps = s.size("steps");
  cfg.batch_size = s.size("batch");
  cfg.momentum = s.real("momentum");
  cfg.weight_decay = s.real("weight_decay");
  cfg.shuffle_seed = s.size("seed");
  cfg.probe_size = s.size("probe_size");
  cfg.schedule = dt::LrSchedule::parse(s.str("schedule"));
  cfg.compression = compression_of(s);
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw dt::ArgumentError("momentum must lie in [0, 1)");
  if (cfg.weight_decay < 0.0) throw dt::ArgumentError("weight_decay must be >= 0");
  return cfg;
}

// ---------------------------------------------------------------- data

struct Data {
  dt::Dataset train, test, probe;
  bool has_probe = false;
  dt::TrainData view() const { return {&train, &test, has_probe ? &probe : nullptr}; }
};

Data load_data(Settings& s) {
  Data d;
  const std::string& kind = s.str("dataset");
  if (kind == "synth") {
    const std::size_t classes = s.size("synth_classes");
    const std::size_t n_train = s.size("synth_train"), n_test = s.size("synth_test"), n_probe = s.size("synth_probe");
    const std::size_t total = n_train + n_test + n_probe;
    if (total % classes != 0) throw dt::ArgumentError("synth_train + synth_test + synth_probe must divide by synth_classes");
    const dt::Dataset all = dt::synth_blobs(classes, total / classes, s.size("synth_size"), s.size("seed"),
                                            {s.size("synth_channels"), s.real("synth_noise"), s.real("synth_separation")});
    auto range = [&](std::size_t from, std::size_t n) {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), from);
      return all.subset(idx);
    };
    d.train = range(0, n_train);
    d.test = n_test ? range(n_train, n_test) : d.train;
    if (n_probe) {
      d.probe = range(n_train + n_test, n_probe);
      d.has_probe = true;
    }
  } else if (kind == "idx") {
    if (s.str("train_images").empty() || s.str("train_labels").empty()) {
      throw dt::ArgumentError("dataset=idx needs train_images and train_labels");
    }
    d.train = dt::load_idx(s.str("train_images"), s.str("train_labels"));
    s.hash_input("train_images", s.str("train_images"));
    s.hash_input("train_labels", s.str("train_labels"));
    d.test = d.train;
    if (!s.str("test_images").empty()) {
      d.test = dt::load_idx(s.str("test_images"), s.str("test_labels"));
      s.hash_input("test_images", s.str("test_images"));
      s.hash_input("test_labels", s.str("test_labels"));
    }
  } else if (kind == "cifar10") {
    if (s.str("train_cifar").empty()) throw dt::ArgumentError("dataset=cifar10 needs train_cifar");
    d.train = dt::load_cifar10_binary(s.str("train_cifar"));
    s.hash_input("train_cifar", s.str("train_cifar"));
    d.test = d.train;
    if (!s.str("test_cifar").empty()) {
      d.test = dt::load_cifar10_binary(s.str("test_cifar"));
      s.hash_input("test_cifar", s.str("test_cifar"));
    }
  } else {
    throw dt::ArgumentError("dataset: expected synth | idx | cifar10, got '" + kind + "'");
  }
  if (d.train.size() == 0) throw dt::ArgumentError("training set is empty");
  if (d.test.size() == 0) d.test = d.train;
  return d;
}

dt::ModelState load_or_init_model(Settings& s, const dt::Dataset& data) {
  if (!s.str("checkpoint").empty()) {
    s.hash_input("checkpoint", s.str("checkpoint"));
    return dt::load_checkpoint(s.str("checkpoint"));
  }
  if (s.str("model") != "toy_cnn") throw dt::ArgumentError("model: only toy_cnn can be built from scratch");
  const auto& shape = data.image_shape;
  if (shape[1] != shape[2] || shape[1] % 2 != 0) {
    throw dt::ArgumentError("toy_cnn needs square images with an even side");
  }
  std::size_t classes = std::max<std::size_t>(data.num_classes, 2);
  return dt::init_model(shape, dt::toy_cnn(shape[0], shape[1], classes, s.size("width1"), s.size("width2")),
                        s.size("seed"));
}

dt::ModelState require_checkpoint(Settings& s) {
  if (s.str("checkpoint").empty()) throw dt::ArgumentError("--checkpoint is required for this command");
  s.hash_input("checkpoint", s.str("checkpoint"));
  return dt::load_checkpoint(s.str("checkpoint"));
}

// ------------------------------------------------------------- outputs

void write_run_metadata(const Settings& s, const std::string& command, const std::string& extra) {
  std::string out = "# deeptwist run metadata; feed back with --config to repeat the run\n";
  out += "# command: " + command + "\n";
  for (const auto& [k, v] : s.values) out += k + " = " + v + "\n";
  for (const auto& [k, v] : s.input_hashes) out += "# input " + k + " " + v + "\n";
  out += extra;
  dt::write_file_atomic(fs::path(s.str("out")) / "run.txt", out);
}

dt::RecordSink streaming_metrics(std::vector<dt::DistortionRecord>& log, const fs::path& path) {
  return [&log, path](const dt::DistortionRecord& r) {
    log.push_back(r);
    dt::write_metrics(log, path);
    std::printf("step %llu  loss %.4f -> %.4f  dL/L %+.4f  dw %.3g  acc %.4f\n",
                static_cast<unsigned long long>(r.step), r.loss_pre, r.loss_post, r.rel_loss_jump, r.delta_w,
                r.test_acc);
    std::fflush(stdout);
  };
}

// ------------------------------------------------------------ commands

int cmd_train(Settings& s) {
  auto cfg = config_of(s);
  if (cfg.total_steps == 0) throw dt::ArgumentError("steps must be >= 1");
  Data data = load_data(s);
  dt::ModelState m = dt::train_plain(load_or_init_model(s, data.train), data.view(), cfg, cfg.total_steps);
  const auto ev = dt::evaluate(m, data.test);
  const fs::path out = s.str("out");
  dt::save_checkpoint(m, out / "model.dtw");
  std::printf("trained %zu steps: test loss %.6f accuracy %.4f\n", cfg.total_steps, ev.loss, ev.accuracy);
  write_run_metadata(s, "train", "# result test_loss " + fmt9(ev.loss) + " test_acc " + fmt9(ev.accuracy) + "\n");
  return 0;
}

int cmd_deeptwist(Settings& s) {
  auto cfg = config_of(s);
  cfg.normalize();
  Data data = load_data(s);
  const fs::path out = s.str("out");
  std::vector<dt::DistortionRecord> log;
  dt::write_metrics(log, out / "metrics.csv");
  const auto result =
      dt::deeptwist_train(load_or_init_model(s, data.train), data.view(), cfg, streaming_metrics(log, out / "metrics.csv"));
  dt::save_checkpoint(result.model, out / "model.dtw");
  std::string extra = "# result distortions " + std::to_string(result.log.size()) + " final_test_acc " +
                      fmt9(result.log.back().test_acc) + "\n";
  if (result.decomposed) {
    dt::save_checkpoint(*result.decomposed, out / "decomposed.dtw");
    extra += "# result decomposed_parameters " + std::to_string(result.decomposed->parameter_count()) +
             " original_parameters " + std::to_string(result.model.parameter_count()) + "\n";
  }
  write_run_metadata(s, "deeptwist", extra);
  return 0;
}

int cmd_baseline(Settings& s) {
  auto cfg = config_of(s);
  if (cfg.compression.method != dt::CompressionMethod::tucker) {
    throw dt::ArgumentError("baseline fine-tuning is only available for --method tucker");
  }
  if (cfg.sd == 0) throw dt::ArgumentError("sd must be >= 1");
  Data data = load_data(s);
  const fs::path out = s.str("out");
  std::vector<dt::DistortionRecord> log;
  dt::write_metrics(log, out / "metrics.csv");
  const auto result =
      dt::baseline_finetune(load_or_init_model(s, data.train), data.view(), cfg, streaming_metrics(log, out / "metrics.csv"));
  dt::save_checkpoint(result.model, out / "decomposed.dtw");
  write_run_metadata(s, "baseline", "# result final_test_acc " + fmt9(result.log.back().test_acc) + "\n");
  return 0;
}

int cmd_decompose(Settings& s) {
  const auto spec = compression_of(s);
  const dt::ModelState m = require_checkpoint(s);
  const dt::Distortion d = dt::distort_weights(m, spec);
  const fs::path out = s.str("out");
  dt::save_checkpoint(d.model, out / "model.dtw");
  std::printf("distorted %zu layers, %zu weights, delta_w %.6g\n", d.factors.size(), d.targeted_weights, d.delta_w);
  std::string extra = "# result delta_w " + fmt9(d.delta_w) + "\n";
  if (spec.method == dt::CompressionMethod::tucker) {
    const dt::ModelState dec = dt::build_decomposed_model(d.model, d.factors);
    dt::save_checkpoint(dec, out / "decomposed.dtw");
    std::printf("parameters %zu -> %zu\n", m.parameter_count(), dec.parameter_count());
  }
  for (const auto& f : d.factors) {
    const auto& k = m.layers[f.layer_index].kernel;
    const double original = static_cast<double>(k.tensor().size());
    double packed = 0.0;
    if (const auto* tf = std::get_if<dt::TuckerFactors>(&f.factors)) {
      packed = static_cast<double>(tf->parameter_count());
    } else {
      packed = static_cast<double>(std::get<dt::TileGridSvd>(f.factors).parameter_count());
    }
    std::printf("  %s: ratio %.4f\n", m.layers[f.layer_index].spec.name.c_str(), original / packed);
    extra += "# layer " + m.layers[f.layer_index].spec.name + " ratio " + fmt9(original / packed) + "\n";
  }
  write_run_metadata(s, "decompose", extra);
  return 0;
}

int cmd_eval(Settings& s) {
  const dt::ModelState m = require_checkpoint(s);
  Data data = load_data(s);
  const auto ev = dt::evaluate(m, data.test);
  std::printf("loss %.9g accuracy %.9g\n", ev.loss, ev.accuracy);
  return 0;
}

struct RatioArgs {
  std::size_t d = 3, S = 0, T = 0, n = 0, m = 0;
};

// An explicit --tile applies to plain svd too; otherwise svd means one tile.
int cmd_ratio(const Settings& s, const RatioArgs& a, bool tile_given) {
  const auto method = dt::parse_method(s.str("method"));
  if (method == dt::CompressionMethod::tucker) {
    if (a.d == 0 || a.S == 0 || a.T == 0) throw dt::ArgumentError("ratio --method tucker needs --d, --s and --t");
    const auto ranks = dt::tucker_ranks(a.S, a.T, s.real("rc"));
    std::printf("R_s %zu R_t %zu ratio %.6f\n", ranks.s, ranks.t, dt::tucker_ratio(a.d, a.S, a.T, ranks.s, ranks.t));
    return 0;
  }
  if (a.n == 0 || a.m == 0) throw dt::ArgumentError("ratio --method svd needs --n and --m");
  const auto tile = method == dt::CompressionMethod::svd_full && !tile_given ? dt::TileDims{a.n, a.m} : parse_tile(s.str("tile"));
  const std::size_t rank = s.size("rank");
  const std::size_t params = dt::tiled_parameter_count(a.n, a.m, tile.h, tile.w, rank);
  std::printf("tile %zux%zu rank %zu ratio %.6f\n", tile.h, tile.w, rank,
              static_cast<double>(a.n * a.m) / static_cast<double>(params));
  return 0;
}

int cmd_variance_study(Settings& s, std::size_t n, const std::string& tiles, double target) {
  if (n == 0) throw dt::ArgumentError("--n must be >= 1");
  const auto dims = parse_tiles(tiles);
  std::mt19937_64 rng(s.size("seed"));
  std::normal_distribution<double> g(0.0, 1.0);
  dt::Matrix m(n, n);
  for (auto& x : m.data()) x = g(rng);
  const auto rows = dt::tiling_variance_study(m, dims, target);
  const fs::path out = s.str("out");
  std::string csv = "tile_h,tile_w,rank,ratio,variance\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.tile_h) + "," + std::to_string(r.tile_w) + "," + std::to_string(r.rank) + "," +
           fmt9(r.ratio) + "," + fmt9(r.variance) + "\n";
    dt::write_histogram(r.histogram, out / ("histogram_" + std::to_string(r.tile_h) + "x" +
                                            std::to_string(r.tile_w) + ".csv"));
    std::printf("tile %zux%zu rank %zu ratio %.4f variance %.6f\n", r.tile_h, r.tile_w, r.rank, r.ratio, r.variance);
  }
  dt::write_file_atomic(out / "variance.csv", csv);
  write_run_metadata(s, "variance-study", "# study n " + std::to_string(n) + " tiles " + tiles + " target " +
                                              fmt9(target) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeepTwist compression-aware training"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  std::string config_path;
  std::map<std::string, std::string> flags;
  RatioArgs ratio;
  std::size_t study_n = 1024;
  std::string study_tiles = "1024x1024,64x64,8x8";
  double study_target = 4.0;

  auto common = [&](CLI::App* sub, std::initializer_list<const char*> keys) {
    sub->add_option("--config", config_path, "key = value file; flags override it")->check(CLI::ExistingFile);
    for (const char* key : keys) {
      const std::string k = key;
      std::string flag = "--" + k;
      for (auto& ch : flag)
        if (ch == '_') ch = '-';
      sub->add_option_function<std::string>(
          flag, [&flags, k](const std::string& v) { flags[k] = v; }, "overrides config key '" + k + "'");
    }
  };

  auto* train = app.add_subcommand("train", "plain SGD training, writes model.dtw");
  common(train, {"seed", "out", "steps", "batch", "momentum", "weight_decay", "schedule", "checkpoint", "dataset", "width1", "width2"});
  auto* twist = app.add_subcommand("deeptwist", "compression-aware training with periodic distortion");
  common(twist, {"seed", "out", "steps", "sd", "rc", "rank", "tile", "method", "batch", "momentum", "weight_decay", "schedule",
                 "checkpoint", "dataset", "min_in_channels", "probe_size"});
  auto* base = app.add_subcommand("baseline", "one-shot Tucker decomposition followed by fine-tuning");
  common(base, {"seed", "out", "steps", "sd", "rc", "method", "batch", "momentum", "weight_decay", "schedule", "checkpoint", "dataset",
                "min_in_channels", "probe_size"});
  auto* decomp = app.add_subcommand("decompose", "one-shot compression of a checkpoint, no fine-tuning");
  common(decomp, {"out", "rc", "rank", "tile", "method", "checkpoint", "min_in_channels"});
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test set");
  common(eval, {"seed", "checkpoint", "dataset"});
  auto* rat = app.add_subcommand("ratio", "compression ratio for given dimensions");
  common(rat, {"method", "rc", "rank", "tile"});
  rat->add_option("--d", ratio.d, "kernel size");
  rat->add_option("--s", ratio.S, "input channels");
  rat->add_option("--t", ratio.T, "output channels");
  rat->add_option("--n", ratio.n, "lowered matrix rows");
  rat->add_option("--m", ratio.m, "lowered matrix columns");
  auto* study = app.add_subcommand("variance-study", "weight variance after tiled SVD of a Gaussian matrix");
  common(study, {"seed", "out"});
  study->add_option("--n", study_n, "matrix side");
  study->add_option("--tiles", study_tiles, "comma-separated HxW list");
  study->add_option("--target", study_target, "overall compression ratio");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitArgument;
  }

  try {
    Settings s;
    if (!config_path.empty()) {
      const auto bytes = dt::read_file_bytes(config_path);
      const std::string text(bytes.begin(), bytes.end());
      for (const auto& [k, v] : dt::parse_key_values(text)) {
        if (!s.values.count(k)) throw dt::ArgumentError("config: unknown key '" + k + "'");
        s.values[k] = v;
      }
      s.input_hashes["config"] = dt::git_blob_hash(text);
    }
    for (const auto& [k, v] : flags) s.values[k] = v;

    if (train->parsed()) return cmd_train(s);
    if (twist->parsed()) return cmd_deeptwist(s);
    if (base->parsed()) return cmd_baseline(s);
    if (decomp->parsed()) return cmd_decompose(s);
    if (eval->parsed()) return cmd_eval(s);
    if (rat->parsed()) return cmd_ratio(s, ratio, flags.count("tile") > 0);
    if (study->parsed()) return cmd_variance_study(s, study_n, study_tiles, study_target);
  } catch (const dt::InfeasibleRatio& e) {
    std::cerr << "error: " << e.what() << " (best achievable " << e.best_achievable() << ")\n";
    return kExitArgument;
  } catch (const dt::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitArgument;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitArgument;
}

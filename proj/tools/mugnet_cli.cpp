#include <CLI11.hpp>

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mugnet/bench.hpp"
#include "mugnet/checkpoint.hpp"
#include "mugnet/errors.hpp"
#include "mugnet/graph_io.hpp"
#include "mugnet/metrics.hpp"
#include "mugnet/synth.hpp"
#include "mugnet/train.hpp"

namespace fs = std::filesystem;
using namespace mugnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::vector<std::string> inputs;
  std::string output;
  std::string config;
  std::string checkpoint;
  std::string truth;
  std::string format;
  std::string classes;
  std::string batch_sizes = "1,2,4,8";
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t points = 0;
  std::size_t repetitions = 5;
  std::size_t workers = 0;
};

std::vector<std::string> all_config_keys() {
  auto keys = TrainConfig::config_keys();
  const KvConfig cluster_keys = ClusterSettings{}.to_config();
  for (const auto& e : cluster_keys.entries()) keys.push_back(e.key);
  keys.emplace_back("eval.absent_classes");
  return keys;
}

KvConfig load_settings(const Options& o) {
  if (o.config.empty()) return {};
  KvConfig cfg = KvConfig::load(o.config);
  cfg.require_known(all_config_keys());
  return cfg;
}

CloudFormat cloud_format(const Options& o, const fs::path& path) {
  if (o.format == "xyz") return CloudFormat::XyzText;
  if (o.format == "ply") return CloudFormat::PlyAscii;
  return format_from_path(path);
}

// "--classes 5" or "--classes floor,wall,furniture".
std::vector<std::string> class_names_from(const std::string& text) {
  if (text.empty()) return {};
  if (text.find_first_not_of("0123456789") == std::string::npos) {
    std::vector<std::string> names;
    const auto n = std::stoul(text);
    if (n == 0) throw ConfigError("--classes must be positive");
    for (std::size_t c = 0; c < n; ++c) names.push_back("class" + std::to_string(c));
    return names;
  }
  return split_list(text);
}

std::vector<std::size_t> parse_batch_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& f : split_list(text)) {
    if (f.empty() || f.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("--batch-sizes expects comma-separated integers, got '" + text + "'");
    }
    out.push_back(std::stoul(f));
  }
  return out;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

void check_readable(const std::string& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path);
}

const Point3& palette(int label) {
  static const std::array<Point3, 10> colors{{{0.12, 0.47, 0.71},
                                              {1.00, 0.50, 0.05},
                                              {0.17, 0.63, 0.17},
                                              {0.84, 0.15, 0.16},
                                              {0.58, 0.40, 0.74},
                                              {0.55, 0.34, 0.29},
                                              {0.89, 0.47, 0.76},
                                              {0.50, 0.50, 0.50},
                                              {0.74, 0.74, 0.13},
                                              {0.09, 0.75, 0.81}}};
  return colors[static_cast<std::size_t>(label) % colors.size()];
}

int cmd_synth(const Options& o) {
  require(o.output, "--output");
  SceneRecipe recipe = o.config.empty() ? default_room_recipe() : SceneRecipe::from_config(KvConfig::load(o.config));
  if (o.points > 0) recipe.points = o.points;
  const PointCloud cloud = synth_scene(recipe, o.seed);
  save_cloud(cloud, o.output, cloud_format(o, o.output));
  std::cout << "wrote " << cloud.size() << " points to " << o.output << '\n';
  return kExitOk;
}

int cmd_cluster(const Options& o) {
  require(o.output, "--output");
  if (o.inputs.size() != 1) throw CLI::ValidationError("--input", "cluster takes exactly one input cloud");
  check_readable(o.inputs[0]);
  const auto settings = ClusterSettings::from_config(load_settings(o));
  auto names = class_names_from(o.classes);
  std::optional<int> num_classes;
  if (!names.empty()) num_classes = static_cast<int>(names.size());
  PointCloud cloud = load_cloud(o.inputs[0], cloud_format(o, o.inputs[0]), num_classes);
  ClusteredScene scene = cluster_scene(std::move(cloud), settings);
  scene.class_names = std::move(names);
  save_scene(scene, o.output);
  std::cout << "clusters " << scene.graph.num_nodes() << ", edges " << scene.graph.edges.size()
            << ", compression " << compression_ratio(scene.graph);
  if (scene.cloud.labels) std::cout << ", purity " << purity(scene.graph, scene.cloud).mean_purity;
  std::cout << '\n';
  return kExitOk;
}

std::vector<ClusteredScene> load_scenes(const std::vector<std::string>& paths) {
  std::vector<ClusteredScene> scenes;
  for (const auto& p : paths) {
    check_readable(p);
    scenes.push_back(load_scene(p));
  }
  return scenes;
}

int cmd_train(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  if (o.inputs.empty()) throw CLI::RequiredError("--input");
  const KvConfig settings = load_settings(o);
  TrainConfig cfg = TrainConfig::from_config(settings);
  if (o.seed_given) cfg.seed = o.seed;
  const auto names = class_names_from(o.classes);
  if (!names.empty()) cfg.model.num_classes = names.size();
  cfg.validate();

  const auto scenes = load_scenes(o.inputs);
  std::vector<SceneInput> inputs;
  for (const auto& s : scenes) {
    if (!s.cloud.labels) throw ValidationError("training scene has no labels");
    inputs.push_back(prepare_scene(s, cfg.model));
  }
  auto result = train(inputs, cfg);

  KvConfig extra;
  const KvConfig echo = cfg.to_config();
  for (const auto& e : echo.entries()) {
    if (e.key.rfind("train.", 0) == 0) extra.add(e.key, e.value);
  }
  std::string joined;
  for (const auto& n : names.empty() ? scenes.front().class_names : names) joined += (joined.empty() ? "" : ",") + n;
  if (!joined.empty()) extra.add("class_names", joined);
  save_checkpoint(result.model, o.checkpoint, extra);

  if (!o.output.empty()) {
    std::ofstream out(o.output);
    if (!out) throw IoError("cannot open " + o.output + " for writing");
    write_history_csv(out, result.history);
  }
  const auto& last = result.history.back();
  std::cout << "epochs " << last.epoch << ", loss " << last.loss << ", cluster accuracy " << last.cluster_accuracy
            << '\n';
  return kExitOk;
}

int cmd_infer(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  require(o.output, "--output");
  if (o.inputs.size() != 1) throw CLI::ValidationError("--input", "infer takes exactly one graph file");
  check_readable(o.checkpoint);
  check_readable(o.inputs[0]);
  auto ck = load_checkpoint(o.checkpoint);
  const ClusteredScene scene = load_scene(o.inputs[0]);
  SceneInput input = prepare_scene(ClusteredScene{scene.cloud.labels ? PointCloud{scene.cloud.positions,
                                                                                 scene.cloud.colors, std::nullopt}
                                                                     : scene.cloud,
                                                  scene.features, scene.graph, scene.class_names},
                                   ck.model.config());
  PointCloud out;
  out.positions = scene.cloud.positions;
  out.labels = infer_points(ck.model, input, scene.graph);
  const CloudFormat format = cloud_format(o, o.output);
  if (format == CloudFormat::PlyAscii) {
    out.colors.emplace();
    for (int l : *out.labels) out.colors->push_back(palette(l));
  }
  save_cloud(out, o.output, format);
  std::cout << "labeled " << out.size() << " points in " << scene.graph.num_nodes() << " clusters\n";
  return kExitOk;
}

int cmd_eval(const Options& o) {
  require(o.truth, "--truth");
  if (o.inputs.size() != 1) throw CLI::ValidationError("--input", "eval takes exactly one prediction cloud");
  check_readable(o.inputs[0]);
  check_readable(o.truth);
  const KvConfig settings = load_settings(o);
  const auto mode = parse_absent_class_mode(settings.get_string("eval.absent_classes", "exclude"));
  const PointCloud pred = load_cloud(o.inputs[0], cloud_format(o, o.inputs[0]));
  const PointCloud truth = load_cloud(o.truth, cloud_format(o, o.truth));
  if (!pred.labels) throw ValidationError(o.inputs[0] + " carries no labels");
  if (!truth.labels) throw ValidationError(o.truth + " carries no labels");
  if (pred.size() != truth.size()) {
    throw ValidationError("prediction has " + std::to_string(pred.size()) + " points, truth " +
                          std::to_string(truth.size()));
  }
  auto names = class_names_from(o.classes);
  std::size_t num_classes = names.size();
  if (num_classes == 0) {
    num_classes = static_cast<std::size_t>(std::max(pred.max_label(), truth.max_label()) + 1);
  }
  const auto result = evaluate(*pred.labels, *truth.labels, num_classes, mode);
  std::cout << format_report(result, names);
  if (!o.output.empty()) {
    std::ofstream out(o.output);
    if (!out) throw IoError("cannot open " + o.output + " for writing");
    out << report_json(result, names).dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_bench(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  if (o.inputs.empty()) throw CLI::RequiredError("--input");
  const auto sizes = parse_batch_sizes(o.batch_sizes);
  check_readable(o.checkpoint);
  auto ck = load_checkpoint(o.checkpoint);
  // A single graph is replicated up to the largest batch size.
  auto scenes = load_scenes(o.inputs);
  std::vector<SceneInput> inputs;
  for (const auto& s : scenes) inputs.push_back(prepare_scene(s, ck.model.config()));
  const std::size_t largest = sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
  for (std::size_t i = inputs.size(); i < largest && !inputs.empty(); ++i) inputs.push_back(inputs[i % scenes.size()]);

  BenchOptions opts;
  opts.repetitions = o.repetitions;
  opts.workers = o.workers;
  const auto report = bench_batched(ck.model, inputs, sizes, opts);
  write_bench_summary(std::cout, report);
  if (!o.output.empty()) {
    std::ofstream out(o.output);
    if (!out) throw IoError("cannot open " + o.output + " for writing");
    write_bench_csv(out, report);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-resolution graph network for pointcloud segmentation"};
  app.require_subcommand(1);
  Options o;

  auto add_io = [&](CLI::App* sub, bool multi_input) {
    if (multi_input) {
      sub->add_option("--input,-i", o.inputs, "Input file(s)");
    } else {
      sub->add_option("--input,-i", o.inputs, "Input file")->expected(1);
    }
    sub->add_option("--output,-o", o.output, "Output file");
    sub->add_option("--config,-c", o.config, "Key-value config file");
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { o.seed = s; o.seed_given = true; }, "Random seed");
  };
  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", o.format, "Cloud format (default from extension)")
        ->check(CLI::IsMember({"xyz", "ply"}));
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled scene");
  synth->add_option("--output,-o", o.output, "Output cloud")->required();
  synth->add_option("--config,-c", o.config, "Scene recipe");
  synth->add_option("--points", o.points, "Override the recipe's point count");
  add_seed(synth);
  add_format(synth);

  auto* cluster = app.add_subcommand("cluster", "Partition a cloud into a superpoint graph");
  add_io(cluster, false);
  add_format(cluster);
  cluster->add_option("--classes", o.classes, "Class count or comma-separated names");

  auto* trainc = app.add_subcommand("train", "Train on labeled graph files");
  add_io(trainc, true);
  add_seed(trainc);
  trainc->add_option("--checkpoint", o.checkpoint, "Checkpoint to write");
  trainc->add_option("--classes", o.classes, "Class count or comma-separated names");

  auto* infer = app.add_subcommand("infer", "Label a graph file with a trained model");
  add_io(infer, false);
  add_format(infer);
  infer->add_option("--checkpoint", o.checkpoint, "Trained checkpoint");

  auto* evalc = app.add_subcommand("eval", "Compare predicted and true point labels");
  add_io(evalc, false);
  add_format(evalc);
  evalc->add_option("--truth", o.truth, "Ground-truth cloud");
  evalc->add_option("--classes", o.classes, "Class count or comma-separated names");

  auto* bench = app.add_subcommand("bench", "Time batched inference");
  add_io(bench, true);
  bench->add_option("--checkpoint", o.checkpoint, "Trained checkpoint");
  bench->add_option("--batch-sizes", o.batch_sizes, "Comma-separated, strictly increasing");
  bench->add_option("--repetitions", o.repetitions, "Timed runs per batch size");
  bench->add_option("--workers", o.workers, "Worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*cluster) return cmd_cluster(o);
    if (*trainc) return cmd_train(o);
    if (*infer) return cmd_infer(o);
    if (*evalc) return cmd_eval(o);
    if (*bench) return cmd_bench(o);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

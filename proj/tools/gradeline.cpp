// gradeline: dataset generation, augmentation, training, evaluation, grading,
// and the edge/cloud/simulator processes.

#include <pthread.h>
#include <signal.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gradeline/cli/commands.hpp"
#include "gradeline/gradeline.hpp"

namespace {

using namespace gradeline;
using nlohmann::json;

// JSON config files for CLI11. Top-level keys set options of the main app;
// an object keyed by a subcommand name sets that subcommand's options.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const auto& name = opt->get_lnames().front();
      if (opt->count() > 0) {
        j[name] = opt->as<std::string>();
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      const auto s = json::parse(to_config(sub, default_also, false, ""));
      if (!s.empty()) j[sub->get_name()] = s;
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void collect(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        collect(value, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("GRADELINE_LOG");
    const std::string s = v ? v : "warn";
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= log_level()) std::cerr << "gradeline [" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

void print_json(const json& j, bool pretty) { std::cout << (pretty ? j.dump(2) : j.dump()) << std::endl; }

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + path);
}

// Blocks SIGINT/SIGTERM in every thread started afterwards; the caller
// collects them with wait_for_shutdown().
sigset_t block_shutdown_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

int wait_for_shutdown(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

services::ClassMix parse_mix(const std::string& s) {
  std::vector<double> w;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      w.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw InvalidArgument("--mix expects three comma-separated weights");
    }
  }
  if (w.size() != 3) throw InvalidArgument("--mix expects three comma-separated weights");
  return {w[0], w[1], w[2]};
}

std::optional<services::Endpoint> parse_optional_endpoint(const std::string& s) {
  if (s.empty() || s == "none") return std::nullopt;
  return services::parse_endpoint(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradeline: two-layer fruit grading toolkit"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file (defaults < file < flags)")->envname("GRADELINE_CONFIG");
  app.require_subcommand(1);
  app.fallthrough();
  bool pretty = false;
  app.add_flag("--pretty", pretty, "Human-readable output");

  // generate
  auto* gen = app.add_subcommand("generate", "Write synthetic frames with ground truth and a manifest");
  std::size_t gen_n = 10;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  GeneratorConfig gen_cfg;
  gen->add_option("--n", gen_n, "Frames per class")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--width", gen_cfg.width, "Frame width")->capture_default_str()->check(CLI::Range(32, 4096));
  gen->add_option("--height", gen_cfg.height, "Frame height")->capture_default_str()->check(CLI::Range(32, 4096));
  gen->add_option("--noise", gen_cfg.noise_amplitude, "Pixel noise amplitude")->capture_default_str()->check(CLI::Range(0, 64));

  // augment
  auto* aug = app.add_subcommand("augment", "Rotate/flip/shift a manifest's originals");
  std::string aug_manifest, aug_out;
  std::uint64_t aug_seed = 0;
  AugmentationPlan plan{250, 250, 250};
  AugmentationConfig aug_cfg;
  aug->add_option("--manifest", aug_manifest, "Input manifest (JSON lines)")->required();
  aug->add_option("--out", aug_out, "Output directory")->required();
  aug->add_option("--seed", aug_seed, "Random seed")->capture_default_str();
  aug->add_option("--rotation", plan.rotation, "Rotated images to add")->capture_default_str();
  aug->add_option("--flipping", plan.flipping, "Flipped images to add")->capture_default_str();
  aug->add_option("--shifting", plan.shifting, "Shifted images to add")->capture_default_str();
  aug->add_option("--max-angle", aug_cfg.max_angle, "Largest rotation in degrees")->capture_default_str();
  aug->add_option("--max-shift", aug_cfg.max_shift_fraction, "Largest shift as a fraction of the size")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train a first-layer classifier");
  std::string tr_manifest, tr_algo = "svm", tr_variant = "A", tr_model, tr_report;
  std::uint64_t tr_seed = 0;
  double tr_holdout = 0.2;
  TrainOptions tr_opt;
  std::string tr_metric = "euclidean";
  train->add_option("--manifest", tr_manifest, "Training manifest")->required();
  train->add_option("--algorithm", tr_algo, "knn|nb|rf|svm")->capture_default_str()
      ->check(CLI::IsMember({"knn", "nb", "rf", "svm"}));
  train->add_option("--variant", tr_variant, "Feature variant A|B")->capture_default_str()->check(CLI::IsMember({"A", "B"}));
  train->add_option("--seed", tr_seed, "Split and forest seed")->capture_default_str();
  train->add_option("--holdout", tr_holdout, "Held-out fraction")->capture_default_str()->check(CLI::Range(0.0, 0.95));
  train->add_option("--model", tr_model, "Model output path");
  train->add_option("--report", tr_report, "Also write the report to this path");
  train->add_option("--gamma", tr_opt.svm.gamma, "SVM RBF gamma")->capture_default_str();
  train->add_option("-C,--svm-c", tr_opt.svm.C, "SVM box constraint")->capture_default_str();
  train->add_option("--k", tr_opt.knn_k, "KNN neighbours")->capture_default_str();
  train->add_option("--metric", tr_metric, "KNN distance")->capture_default_str()
      ->check(CLI::IsMember({"euclidean", "manhattan"}));
  train->add_option("--trees", tr_opt.forest.trees, "Forest size")->capture_default_str();
  train->add_flag("--standardize", tr_opt.standardize, "Z-score features before training");

  // eval
  auto* ev = app.add_subcommand("eval", "Classification or detection metrics");
  std::string ev_model, ev_manifest, ev_variant, ev_confusion, ev_dets, ev_truth, ev_conv = "stepwise";
  double ev_iou = 0.5;
  ev->add_option("--model", ev_model, "Model file");
  ev->add_option("--manifest", ev_manifest, "Labelled manifest");
  ev->add_option("--variant", ev_variant, "Expected model variant")->check(CLI::IsMember({"A", "B"}));
  ev->add_option("--confusion", ev_confusion, "Confusion counts JSON");
  ev->add_option("--detections", ev_dets, "Predicted boxes JSON");
  ev->add_option("--truth", ev_truth, "Ground-truth boxes JSON");
  ev->add_option("--iou", ev_iou, "IoU threshold")->capture_default_str();
  ev->add_option("--convention", ev_conv, "AP convention")->capture_default_str()
      ->check(CLI::IsMember({"stepwise", "interpolated", "eleven-point"}));

  // grade
  auto* gr = app.add_subcommand("grade", "Grade one image (exit 0 Market, 2 Defective)");
  std::string gr_image, gr_model;
  SpotDetectorConfig det_cfg;
  PipelineConfig pipe_cfg;
  gr->add_option("image", gr_image, "Image file (PNG or P6 PPM)")->required();
  gr->add_option("--model", gr_model, "Model file")->required();
  gr->add_option("--hue-min", det_cfg.hue_min, "Spot hue lower bound")->capture_default_str();
  gr->add_option("--hue-max", det_cfg.hue_max, "Spot hue upper bound")->capture_default_str();
  gr->add_option("--max-value", det_cfg.max_value, "Spot value upper bound")->capture_default_str();
  gr->add_option("--min-area", det_cfg.min_area, "Smallest spot in pixels")->capture_default_str();
  gr->add_option("--merge-gap", det_cfg.merge_gap, "Spot merge distance")->capture_default_str();

  // serve-cloud
  auto* sc = app.add_subcommand("serve-cloud", "Run the layer-2 detection service");
  std::string sc_host = "127.0.0.1";
  std::uint16_t sc_port = 7700;
  services::CloudConfig sc_cfg;
  sc->add_option("--host", sc_host, "Bind address")->capture_default_str();
  sc->add_option("--port", sc_port, "TCP port")->capture_default_str();
  sc->add_option("--max-payload", sc_cfg.max_payload_bytes, "Largest accepted message in bytes")->capture_default_str();

  // serve-edge
  auto* se = app.add_subcommand("serve-edge", "Run the layer-1 edge service");
  std::string se_host = "127.0.0.1", se_model, se_variant, se_cloud, se_event_log, se_mode = "Auto";
  std::uint16_t se_port = 7701;
  int se_http = 8080;
  services::EdgeConfig se_cfg;
  se->add_option("--host", se_host, "Bind address")->capture_default_str();
  se->add_option("--port", se_port, "TCP port for frames")->capture_default_str();
  se->add_option("--http-port", se_http, "HTTP port for the console (-1 disables)")->capture_default_str();
  se->add_option("--model", se_model, "Model file")->required();
  se->add_option("--variant", se_variant, "Expected model variant")->check(CLI::IsMember({"A", "B"}));
  se->add_option("--cloud-addr", se_cloud, "Cloud service host:port, or none")->envname("GRADELINE_CLOUD_ADDR");
  se->add_option("--cloud-timeout-ms", se_cfg.cloud_timeout_ms, "Cloud request timeout")->capture_default_str();
  se->add_option("--mode", se_mode, "Initial mode")->capture_default_str()->check(CLI::IsMember({"Auto", "Manual"}));
  se->add_option("--event-log", se_event_log, "Write the event history here on shutdown");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run the conveyor simulator against an edge service");
  std::string sim_edge = "127.0.0.1:7701", sim_mix = "1,1,1", sim_log;
  services::SimulatorConfig sim_cfg;
  sim_cfg.count = 100;
  sim->add_option("--edge-addr", sim_edge, "Edge service host:port")->capture_default_str()->envname("GRADELINE_EDGE_ADDR");
  sim->add_option("--rate", sim_cfg.rate, "Items per second")->capture_default_str();
  sim->add_option("--count", sim_cfg.count, "Items to emit (0 = until interrupted)")->capture_default_str();
  sim->add_option("--seed", sim_cfg.seed, "Random seed")->capture_default_str();
  sim->add_option("--mix", sim_mix, "Class weights unripened,ripened,overripened")->capture_default_str();
  sim->add_option("--buffer", sim_cfg.buffer_limit, "Frames buffered while the edge is unreachable")->capture_default_str();
  sim->add_option("--log", sim_log, "Write the routing log here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const auto m = cli::cmd_generate(gen_n, gen_seed, gen_out, gen_cfg);
      print_json(cli::manifest_summary(m), pretty);
      return 0;
    }
    if (*aug) {
      const auto m = cli::cmd_augment(aug_manifest, plan, aug_seed, aug_out, aug_cfg);
      print_json(cli::manifest_summary(m), pretty);
      return 0;
    }
    if (*train) {
      tr_opt.algorithm = parse_algorithm(tr_algo);
      tr_opt.knn_metric = tr_metric == "manhattan" ? DistanceMetric::Manhattan : DistanceMetric::Euclidean;
      std::optional<std::filesystem::path> out;
      if (!tr_model.empty()) out = tr_model;
      const json report = cli::cmd_train(tr_manifest, tr_opt, parse_variant(tr_variant), tr_seed, tr_holdout, out,
                                         pipe_cfg.segmentation);
      if (!tr_report.empty()) write_json(tr_report, report);
      if (pretty && report["metrics"].is_object()) {
        std::cout << format_confusion(cli::confusion_from_json(
            {{"labels", report["metrics"]["labels"]}, {"counts", report["metrics"]["confusion"]}}));
      } else {
        print_json(report, pretty);
      }
      return 0;
    }
    if (*ev) {
      const bool by_model = !ev_model.empty() || !ev_manifest.empty();
      const bool by_conf = !ev_confusion.empty();
      const bool by_det = !ev_dets.empty() || !ev_truth.empty();
      if (by_model + by_conf + by_det != 1) {
        throw InvalidArgument("eval: give --model with --manifest, or --confusion, or --detections with --truth");
      }
      if (by_model && (ev_model.empty() || ev_manifest.empty())) throw InvalidArgument("eval: --model needs --manifest");
      if (by_det && (ev_dets.empty() || ev_truth.empty())) throw InvalidArgument("eval: --detections needs --truth");
      json r;
      if (by_model) {
        std::optional<FeatureVariant> expected;
        if (!ev_variant.empty()) expected = parse_variant(ev_variant);
        r = cli::cmd_eval_model(ev_model, ev_manifest, expected);
      } else if (by_conf) {
        r = cli::cmd_eval_confusion(ev_confusion);
      } else {
        const ApConvention conv = ev_conv == "interpolated"   ? ApConvention::Interpolated
                                  : ev_conv == "eleven-point" ? ApConvention::ElevenPoint
                                                              : ApConvention::Stepwise;
        r = cli::cmd_eval_detections(ev_dets, ev_truth, ev_iou, conv);
      }
      if (pretty && r.contains("confusion")) {
        std::cout << format_confusion(cli::confusion_from_json({{"labels", r["labels"]}, {"counts", r["confusion"]}}));
      } else {
        print_json(r, pretty);
      }
      return 0;
    }
    if (*gr) {
      const GradeResult r = cli::cmd_grade(gr_image, gr_model, det_cfg, pipe_cfg);
      print_json(to_json(r), pretty);
      return cli::exit_code_for(r);
    }
    if (*sc) {
      const sigset_t signals = block_shutdown_signals();
      const SpotDetector detector;
      services::CloudService cloud(detector, sc_cfg);
      cloud.start({sc_host, sc_port});
      log(LogLevel::Info, "cloud service listening on " + sc_host + ":" + std::to_string(cloud.port()));
      print_json({{"service", "cloud"}, {"port", cloud.port()}}, false);
      wait_for_shutdown(signals);
      cloud.stop();
      print_json({{"requests", cloud.requests()}, {"errors", cloud.errors()}}, pretty);
      return 0;
    }
    if (*se) {
      std::optional<FeatureVariant> expected;
      if (!se_variant.empty()) expected = parse_variant(se_variant);
      const Classifier clf = load_model(se_model, expected);
      se_cfg.mode = services::parse_mode(se_mode);
      const auto cloud = parse_optional_endpoint(se_cloud);
      const sigset_t signals = block_shutdown_signals();
      services::EdgeService edge(clf, cloud, se_cfg);
      edge.start({se_host, se_port});
      if (se_http >= 0) edge.start_http(se_host, se_http);
      log(LogLevel::Info, "edge service listening on " + se_host + ":" + std::to_string(edge.port()));
      print_json({{"service", "edge"}, {"port", edge.port()}, {"http_port", edge.http_port()}}, false);
      wait_for_shutdown(signals);
      edge.stop();
      if (!se_event_log.empty()) write_json(se_event_log, edge.events_since(0));
      print_json(edge.state(), pretty);
      return 0;
    }
    if (*sim) {
      sim_cfg.mix = parse_mix(sim_mix);
      const sigset_t signals = block_shutdown_signals();
      services::Simulator simulator(services::parse_endpoint(sim_edge), sim_cfg);
      std::thread watcher([&] {
        wait_for_shutdown(signals);
        simulator.stop();
      });
      simulator.run();
      // Release the watcher if the run ended on its own.
      pthread_kill(watcher.native_handle(), SIGTERM);
      watcher.join();
      json report = simulator.report();
      if (!sim_log.empty()) write_json(sim_log, report);
      report.erase("items");
      print_json(report, pretty);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "gradeline: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

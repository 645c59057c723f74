// Copyright 2026 The uncertseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pipeline.hpp"
#include "uncertseg/bayes.hpp"
#include "uncertseg/checkpoint.hpp"
#include "uncertseg/data.hpp"
#include "uncertseg/io.hpp"
#include "uncertseg/metrics.hpp"
#include "uncertseg/postprocess.hpp"
#include "uncertseg/train.hpp"

namespace uncertseg::cli {

namespace fs = std::filesystem;

namespace {

/// Bad flags, missing inputs, unwritable outputs: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenerateArgs {
  std::string out;
  std::size_t volumes = 60;
  std::uint64_t seed = 7;
  std::string geometry = "128x128";
  std::size_t bscans = 49;
  bool shadows_as_disruptions = false;
};

struct TrainArgs {
  std::string data, out;
  std::string arch = "u2net";
  std::size_t width = 4;
  float lr = 1e-3f;
  int epochs = 10;
  std::size_t batch_size = 2;
  float weight_decay = 5e-4f;
  int plateau_window = 15;
  double plateau_min_improvement = 1e-4;
  float lr_factor = 0.5f;
  int noise_samples = 10;
  std::uint64_t seed = 1;
};

struct PredictArgs {
  std::string checkpoint, data, out;
  std::string split = "testA";
  int T = 10;
  bool eval_mode = false;
  std::uint64_t seed = 1;
};

struct EvaluateArgs {
  std::string data, predictions, checkpoint, out;
  std::string sweep_T;
  std::string sweep_split = "val";
  std::uint64_t seed = 1;
};

// ------------------------------------------------------------- helpers

void prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path probe = dir / ".write-test";
  std::ofstream f(probe);
  if (ec || !f) throw UsageError("cannot write to output directory " + dir.string());
  f.close();
  fs::remove(probe, ec);
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw UsageError("missing " + what + ": " + path.string());
}

std::pair<std::size_t, std::size_t> parse_geometry(const std::string& text) {
  const auto x = text.find('x');
  std::size_t h = 0, w = 0;
  if (x != std::string::npos) {
    const char* s = text.data();
    auto [p1, e1] = std::from_chars(s, s + x, h);
    auto [p2, e2] = std::from_chars(s + x + 1, s + text.size(), w);
    if (e1 == std::errc() && e2 == std::errc() && p1 == s + x && p2 == s + text.size() && h > 0 &&
        w > 0) {
      return {h, w};
    }
  }
  throw UsageError("--geometry expects HxW, got '" + text + "'");
}

std::vector<int> parse_T_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int t = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), t);
    if (ec != std::errc() || p != item.data() + item.size() || t < 1) {
      throw UsageError("--sweep-T expects a comma-separated list of positive integers");
    }
    out.push_back(t);
  }
  if (out.empty()) throw UsageError("--sweep-T is empty");
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

/// Flat key=value file; '#' starts a comment. Keys are long option names
/// with or without the leading dashes.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(0, 1);
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

/// Every option of the subcommand with its effective value, defaults
/// included.
std::string describe(const CLI::App& sub) {
  std::ostringstream o;
  o << "command " << sub.get_name() << '\n';
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::string value = opt->count() > 0 ? opt->results().back() : opt->get_default_str();
    if (opt->get_expected_max() == 0 && value.empty()) value = "false";
    o << name << '=' << value << '\n';
  }
  return o.str();
}

void log_run(const CLI::App& sub, const fs::path& out_dir, std::ostream& out) {
  const std::string text = describe(sub);
  write_text(out_dir / "run.log", text);
  out << text;
}

SplitManifest load_manifest(const fs::path& data) {
  require_file(data / "splits.txt", "dataset split manifest");
  require_file(data / "volumes.tsv", "dataset volume index");
  return SplitManifest::parse(read_text(data / "splits.txt"));
}

std::vector<Volume> load_split(const fs::path& data, const SplitManifest& manifest,
                               const std::string& split) {
  const std::vector<std::string>* ids = nullptr;
  try {
    ids = &manifest.split(split);
  } catch (const std::exception&) {
    throw UsageError("unknown split '" + split + "'");
  }
  std::vector<Volume> out;
  for (const auto& id : *ids) {
    require_file(data / (id + "_image.tnsr"), "volume image");
    require_file(data / (id + "_mask.tnsr"), "volume mask");
    out.push_back(load_volume(data, id));
  }
  return out;
}

Network open_checkpoint(const fs::path& dir) {
  require_file(dir / "manifest.txt", "checkpoint manifest");
  return load_checkpoint(dir);
}

std::string bscan_stem(std::size_t b) {
  std::ostringstream o;
  o << 'b' << std::setw(3) << std::setfill('0') << b;
  return o.str();
}

// ------------------------------------------------------------ commands

void cmd_generate(const GenerateArgs& a, int threads, const CLI::App& sub, std::ostream& out) {
  const auto [h, w] = parse_geometry(a.geometry);
  CorpusConfig cc;
  cc.volumes = a.volumes;
  cc.height = h;
  cc.width = w;
  cc.bscans = a.bscans;
  cc.seed = a.seed;
  cc.shadows_as_disruptions = a.shadows_as_disruptions;
  if (h % 16 != 0 || w % 16 != 0) throw UsageError("--geometry must be divisible by 16");
  if (a.volumes == 0 || a.bscans == 0) throw UsageError("--volumes and --bscans must be positive");

  const fs::path dir = a.out;
  prepare_output(dir);
  log_run(sub, dir, out);
  const std::vector<Volume> vols = generate_corpus(cc, threads);
  save_volumes(dir, vols);

  std::vector<VolumeInfo> infos;
  std::size_t ga = 0;
  for (const auto& v : vols) {
    infos.push_back({v.id, v.disease});
    ga += v.disease == Disease::LateAMDGA;
  }
  SplitCounts counts;
  try {
    counts = SplitCounts::scaled(vols.size() - ga, ga);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--volumes too small: ") + e.what());
  }
  Rng split_rng(Rng::derive(a.seed, 0x5b117));
  const SplitManifest manifest = make_splits(infos, counts, split_rng);
  write_text(dir / "splits.txt", manifest.to_text(infos));

  std::ostringstream g;
  g << "volumes " << cc.volumes << "\nheight " << cc.height << "\nwidth " << cc.width
    << "\nbscans " << cc.bscans << "\nseed " << cc.seed << "\nshadows_as_disruptions "
    << cc.shadows_as_disruptions << '\n';
  for (const auto& v : vols) {
    GeneratorParams p = params_for(v.disease, v.severity, h, w, cc.bscans);
    p.shadows_as_disruptions = cc.shadows_as_disruptions;
    g << "volume " << v.id << " disease " << to_string(v.disease) << " severity "
      << format_double(v.severity) << " seed " << v.seed << " thickness "
      << format_double(p.thickness_min) << ' ' << format_double(p.thickness_max)
      << " disruption_rate " << format_double(p.disruption_rate) << " disruption_mean_run "
      << format_double(p.disruption_mean_run) << " shadow_rate " << format_double(p.shadow_rate)
      << " shadow_mean_run " << format_double(p.shadow_mean_run) << " noise_level "
      << format_double(p.noise_level) << " edge_softness " << format_double(p.edge_softness)
      << " cysts_per_bscan " << format_double(p.cysts_per_bscan) << " atrophy_fraction "
      << format_double(p.atrophy_fraction) << '\n';
  }
  write_text(dir / "generator.txt", g.str());
  out << "generated " << vols.size() << " volumes: train " << manifest.train.size() << " val "
      << manifest.val.size() << " testA " << manifest.testA.size() << " testB "
      << manifest.testB.size() << '\n';
}

void cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
  TrainConfig cfg;
  try {
    cfg.variant = parse_variant(a.arch);
  } catch (const std::exception&) {
    throw UsageError("--arch must be u2net, unet or bunet");
  }
  cfg.base_width = a.width;
  cfg.lr0 = a.lr;
  cfg.max_epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.weight_decay = a.weight_decay;
  cfg.plateau_window = a.plateau_window;
  cfg.plateau_min_improvement = a.plateau_min_improvement;
  cfg.lr_factor = a.lr_factor;
  cfg.noise_samples = a.noise_samples;
  cfg.seed = a.seed;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const fs::path data = a.data;
  const SplitManifest manifest = load_manifest(data);
  const auto train_set = load_split(data, manifest, "train");
  const auto val_set = load_split(data, manifest, "val");
  if (train_set.empty() || val_set.empty()) throw UsageError("dataset has an empty train or val split");

  const fs::path dir = a.out;
  prepare_output(dir);
  log_run(sub, dir, out);
  auto result = train(cfg, train_set, val_set, [&](const EpochSummary& s) {
    out << "epoch " << s.epoch << " loss " << format_double(s.train_loss) << " val_dice "
        << format_double(s.val_dice) << " lr " << format_float(s.lr) << (s.best ? " best" : "")
        << '\n'
        << std::flush;
  });
  const auto& h = result.history;
  const auto best = static_cast<std::size_t>(h.best_epoch);
  save_checkpoint(dir / "best", result.best,
                  {{"epoch", std::to_string(best)}, {"val_dice", format_double(h.val_dice[best])},
                   {"seed", std::to_string(cfg.seed)}});
  save_checkpoint(dir / "final", result.last,
                  {{"epoch", std::to_string(h.epochs() - 1)},
                   {"val_dice", format_double(h.val_dice.back())},
                   {"seed", std::to_string(cfg.seed)}});
  write_text(dir / "history.csv", h.to_csv());
  out << "best epoch " << best << " val_dice " << format_double(h.val_dice[best]) << '\n';
}

void cmd_predict(const PredictArgs& a, int threads, const CLI::App& sub, std::ostream& out) {
  if (!a.eval_mode && a.T < 1) throw UsageError("--T must be at least 1");
  const Network net = open_checkpoint(a.checkpoint);
  const fs::path data = a.data;
  const auto volumes = load_split(data, load_manifest(data), a.split);

  const fs::path dir = a.out;
  prepare_output(dir);
  log_run(sub, dir, out);
  InferenceConfig ic;
  ic.T = a.T;
  ic.eval_mode = a.eval_mode;
  ic.seed = a.seed;
  ic.threads = threads;

  std::ostringstream index;
  index << "format uncertseg-predictions 1\nsplit " << a.split << "\nmode "
        << (a.eval_mode ? "eval" : "mc") << "\nT " << (a.eval_mode ? 1 : a.T) << "\nseed "
        << a.seed << '\n';
  for (const Volume& v : volumes) {
    const auto outcome = infer_split(net, std::span<const Volume>(&v, 1), ic).front();
    const fs::path vdir = dir / v.id;
    fs::create_directories(vdir);
    const std::size_t hw = outcome.mean_prob.size() / v.count();
    const Shape map_shape{outcome.mean_prob.dim(1), outcome.mean_prob.dim(2)};
    for (std::size_t b = 0; b < v.count(); ++b) {
      auto slice = [&](const Tensor& stack) {
        const auto first = stack.vec().begin() + static_cast<long>(b * hw);
        return Tensor(map_shape, std::vector<float>(first, first + static_cast<long>(hw)));
      };
      const Tensor prob = slice(outcome.mean_prob);
      const Tensor std_map = slice(outcome.epistemic_std);
      const std::string stem = bscan_stem(b);
      save_tensor(vdir / (stem + "_mean_prob.tnsr"), prob);
      save_tensor(vdir / (stem + "_std.tnsr"), std_map);
      export_pgm(normalize_uncertainty(std_map), vdir / (stem + "_uncertainty.pgm"));
      export_pgm(mask_to_tensor(otsu_threshold(prob)), vdir / (stem + "_mask.pgm"));
    }
    index << "volume " << v.id << ' ' << v.count() << '\n';
    out << "predicted " << v.id << '\n';
  }
  write_text(dir / "predictions.txt", index.str());
}

/// Loads a predict output directory for `split`, checking that every
/// volume and B-scan is present.
std::vector<VolumeOutcome> load_predictions(const fs::path& pred, const fs::path& data,
                                            std::string* split_out) {
  require_file(pred / "predictions.txt", "prediction index");
  std::istringstream in(read_text(pred / "predictions.txt"));
  std::string line, split;
  std::map<std::string, std::size_t> listed;
  if (!std::getline(in, line) || line != "format uncertseg-predictions 1") {
    throw FormatError("predictions.txt: bad header");
  }
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "split") ls >> split;
    if (key == "volume") {
      std::string id;
      std::size_t n = 0;
      ls >> id >> n;
      listed[id] = n;
    }
  }
  const auto volumes = load_split(data, load_manifest(data), split);
  std::vector<VolumeOutcome> outcomes;
  for (const Volume& v : volumes) {
    auto it = listed.find(v.id);
    if (it == listed.end() || it->second != v.count()) {
      throw UsageError("incomplete predictions: volume " + v.id + " is missing");
    }
    VolumeOutcome o{v.id, Tensor(v.bscans.shape()), Tensor(v.bscans.shape()), v.masks};
    const std::size_t hw = v.bscans.dim(1) * v.bscans.dim(2);
    for (std::size_t b = 0; b < v.count(); ++b) {
      const fs::path stem = pred / v.id / bscan_stem(b);
      for (const char* part : {"_mean_prob.tnsr", "_std.tnsr"}) {
        const fs::path file = stem.string() + part;
        if (!fs::is_regular_file(file)) {
          throw UsageError("incomplete predictions: missing " + file.string());
        }
        const Tensor t = load_tensor(file);
        if (t.size() != hw) throw UsageError("prediction size mismatch in " + file.string());
        Tensor& dst = std::string(part) == "_std.tnsr" ? o.epistemic_std : o.mean_prob;
        std::copy_n(t.ptr(), hw, dst.ptr() + b * hw);
      }
    }
    outcomes.push_back(std::move(o));
  }
  *split_out = split;
  return outcomes;
}

void cmd_evaluate(const EvaluateArgs& a, int threads, const CLI::App& sub, std::ostream& out) {
  if (a.predictions.empty() && a.sweep_T.empty()) {
    throw UsageError("evaluate needs --predictions, --sweep-T or both");
  }
  std::vector<int> Ts;
  if (!a.sweep_T.empty()) {
    Ts = parse_T_list(a.sweep_T);
    if (a.checkpoint.empty()) throw UsageError("--sweep-T needs --checkpoint");
  }
  const fs::path data = a.data;
  const fs::path dir = a.out;

  if (!a.predictions.empty()) {
    std::string split;
    const auto outcomes = load_predictions(a.predictions, data, &split);
    if (outcomes.empty()) throw UsageError("split '" + split + "' has no volumes");
    const EvalReport report = evaluate(outcomes);
    prepare_output(dir);
    log_run(sub, dir, out);
    write_text(dir / "report.txt", report.to_text());
    write_text(dir / "volumes.csv", report.volumes_csv());
    write_text(dir / "scatter.svg", report.scatter_svg("Dice vs mean uncertainty, " + split));
    out << report.to_text();
  } else {
    prepare_output(dir);
    log_run(sub, dir, out);
  }

  if (!Ts.empty()) {
    const Network net = open_checkpoint(a.checkpoint);
    const auto volumes = load_split(data, load_manifest(data), a.sweep_split);
    if (volumes.empty()) throw UsageError("split '" + a.sweep_split + "' has no volumes");
    const auto rows = sweep_T(net, volumes, Ts, a.seed, threads);
    const std::string csv = sweep_csv(rows);
    write_text(dir / "auc_vs_T.csv", csv);
    out << csv;
  }
}

// --------------------------------------------------------------- parsing

/// Places config-file values right after the subcommand so that flags on
/// the command line, which come later, win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
  if (args.empty()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (sub == nullptr) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::vector<std::string> out{args[0]};
  for (const auto& [key, value] : read_config(path)) {
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config" || key == "help") {
      throw UsageError("unknown config key '" + key + "' for " + args[0]);
    }
    out.push_back("--" + key + "=" + value);
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Photoreceptor layer segmentation with Monte-Carlo dropout uncertainty",
               "uncertseg"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);

  int threads = threads_from_env(1);
  std::string config_path;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Flat key=value file; flags given here override it");
    sub->add_option("--threads", threads, "Worker threads (UNCERTSEG_THREADS when unset)")
        ->check(CLI::PositiveNumber);
  };

  GenerateArgs ga;
  CLI::App* gen = app.add_subcommand("generate", "Render a synthetic OCT corpus and its splits");
  gen->add_option("--out", ga.out, "Output dataset directory")->required();
  gen->add_option("--volumes", ga.volumes, "Number of volumes");
  gen->add_option("--seed", ga.seed, "Corpus seed");
  gen->add_option("--geometry", ga.geometry, "B-scan size HxW (multiples of 16)");
  gen->add_option("--bscans", ga.bscans, "B-scans per volume");
  gen->add_flag("--shadows-as-disruptions", ga.shadows_as_disruptions,
                "Remove the layer under vessel shadows");
  common(gen);

  TrainArgs ta;
  CLI::App* trn = app.add_subcommand("train", "Train a network on the train split");
  trn->add_option("--data", ta.data, "Dataset directory")->required();
  trn->add_option("--out", ta.out, "Output directory for checkpoints and history")->required();
  trn->add_option("--arch", ta.arch, "u2net, unet or bunet");
  trn->add_option("--width", ta.width, "Channels of the first encoder block (64 = published)");
  trn->add_option("--lr", ta.lr, "Initial learning rate");
  trn->add_option("--epochs", ta.epochs, "Number of epochs");
  trn->add_option("--batch-size", ta.batch_size, "B-scans per step");
  trn->add_option("--weight-decay", ta.weight_decay, "L2 weight decay");
  trn->add_option("--plateau-window", ta.plateau_window, "Epochs per plateau check");
  trn->add_option("--plateau-min-improvement", ta.plateau_min_improvement,
                  "Dice gain below which the rate is cut");
  trn->add_option("--lr-factor", ta.lr_factor, "Rate multiplier on a plateau");
  trn->add_option("--noise-samples", ta.noise_samples, "Aleatoric noise draws per step (bunet)");
  trn->add_option("--seed", ta.seed, "Run seed");
  common(trn);

  PredictArgs pa;
  CLI::App* prd = app.add_subcommand("predict", "MC-dropout inference over one split");
  prd->add_option("--checkpoint", pa.checkpoint, "Checkpoint directory")->required();
  prd->add_option("--data", pa.data, "Dataset directory")->required();
  prd->add_option("--out", pa.out, "Output directory")->required();
  prd->add_option("--split", pa.split, "train, val, testA or testB");
  prd->add_option("--T", pa.T, "MC samples per B-scan");
  prd->add_flag("--eval-mode", pa.eval_mode, "Single deterministic pass, dropout off");
  prd->add_option("--seed", pa.seed, "MC seed");
  common(prd);

  EvaluateArgs ea;
  CLI::App* evl = app.add_subcommand("evaluate", "Score predictions against ground truth");
  evl->add_option("--data", ea.data, "Dataset directory")->required();
  evl->add_option("--out", ea.out, "Report directory")->required();
  evl->add_option("--predictions", ea.predictions, "Output directory of predict");
  evl->add_option("--checkpoint", ea.checkpoint, "Checkpoint for --sweep-T");
  evl->add_option("--sweep-T", ea.sweep_T, "Comma-separated sample counts, e.g. 1,2,5,10,20,50");
  evl->add_option("--sweep-split", ea.sweep_split, "Split used by --sweep-T");
  evl->add_option("--seed", ea.seed, "MC seed for --sweep-T");
  common(evl);

  try {
    std::vector<std::string> argv = expand_config(args, app);
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (gen->parsed()) cmd_generate(ga, threads, *gen, out);
    if (trn->parsed()) cmd_train(ta, *trn, out);
    if (prd->parsed()) cmd_predict(pa, threads, *prd, out);
    if (evl->parsed()) cmd_evaluate(ea, threads, *evl, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace uncertseg::cli

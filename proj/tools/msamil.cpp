// msamil command-line driver.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msamil/errors.hpp"
#include "msamil/evalbench/evalbench.hpp"
#include "msamil/kvfile.hpp"
#include "msamil/msfem/encoder.hpp"
#include "msamil/numcore/params.hpp"
#include "msamil/pipeline/pipeline.hpp"
#include "msamil/sffm/sffm.hpp"
#include "msamil/synthwsi/dataset.hpp"

namespace fs = std::filesystem;
using namespace msamil;
using pipeline::RunConfig;

namespace {

// Options shared by every command that builds a RunConfig.
struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<std::size_t> epochs, batch, accum, workers;
  std::optional<std::string> source, mask;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key=value config file (overrides defaults)");
    cmd->add_option("--set", sets, "key=value override, repeatable (overrides the config file)");
    cmd->add_option("--seed", seed, "training seed [1]");
    cmd->add_option("--lr", lr, "learning rate [0.0005]");
    cmd->add_option("--epochs", epochs, "training epochs [40]");
    cmd->add_option("--batch", batch, "instances per graph B [64]");
    cmd->add_option("--accum", accum, "gradient accumulation steps [1]");
    cmd->add_option("--source", source, "patch source: lesion_only | all_nonbackground | random_k [lesion_only]");
    cmd->add_option("--mask", mask, "mask provider: oracle | file [oracle]");
    cmd->add_option("--workers", workers, "worker threads for patch preparation [1]");
  }

  // defaults < base (a run manifest) < config file < --set < named flags
  RunConfig resolve(const std::optional<RunConfig>& base = std::nullopt) const {
    RunConfig cfg = base.value_or(RunConfig{});
    if (!config_file.empty()) {
      if (!fs::exists(config_file)) throw Error(ErrorKind::MissingInput, "config file " + config_file + " not found");
      const auto kv = KvFile::read(config_file);
      bool manifest = false;
      for (const auto& [k, v] : kv.entries()) manifest = manifest || k.rfind("config.", 0) == 0;
      // a run manifest: only its config.* entries count
      if (manifest) {
        for (const auto& [k, v] : kv.entries())
          if (k.rfind("config.", 0) == 0) cfg.set(k.substr(7), v);
      } else {
        cfg.apply(kv);
      }
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::Config, "--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) cfg.train.seed = *seed;
    if (lr) cfg.train.learning_rate = *lr;
    if (epochs) cfg.train.epochs = *epochs;
    if (batch) cfg.train.batch = *batch;
    if (accum) cfg.train.accum_steps = *accum;
    if (source) cfg.train.source = pipeline::parse_source(*source);
    if (mask) cfg.mask = pipeline::parse_mask(*mask);
    if (workers) cfg.workers = *workers;
    pipeline::validate(cfg.model);
    pipeline::validate(cfg.train);
    return cfg;
  }
};

std::unique_ptr<sffm::MaskProvider> make_provider(const RunConfig& cfg, const synth::Dataset& ds, const fs::path& root) {
  if (cfg.mask == pipeline::MaskKind::File) return std::make_unique<sffm::FileMaskProvider>(root);
  return std::make_unique<sffm::OracleMaskProvider>(ds.spec);
}

std::vector<pipeline::SlidePatches> load_bank(const synth::Dataset& ds, const fs::path& root, const RunConfig& cfg) {
  const auto provider = make_provider(cfg, ds, root);
  std::cerr << "preparing patches for " << ds.slides.size() << " slides\n";
  return pipeline::build_bank(ds, *provider, cfg.train, cfg.model.encoder.input_side, cfg.workers);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

// Model config of a params file comes from the manifest written next to it, when present.
std::optional<RunConfig> manifest_config(const fs::path& params) {
  const auto manifest = params.parent_path() / "manifest.txt";
  if (!fs::exists(manifest)) return std::nullopt;
  return pipeline::config_from_manifest(KvFile::read(manifest));
}

numcore::ParamStore load_model(const fs::path& params, const RunConfig& cfg) {
  if (!fs::exists(params)) throw Error(ErrorKind::MissingInput, "parameter file " + params.string() + " not found");
  auto store = pipeline::init_model(cfg.model, cfg.train.seed);
  numcore::load_params_into(store, params);
  return store;
}

KvFile command_manifest(const std::string& command, const RunConfig& cfg, const std::string& dataset) {
  KvFile kv;
  kv.set("command", command);
  kv.set("seed", std::to_string(cfg.train.seed));
  kv.set("dataset", dataset);
  const KvFile echo = cfg.echo();
  for (const auto& [k, v] : echo.entries()) kv.set("config." + k, v);
  return kv;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::map<std::string, pipeline::SlideInfo> slide_infos(const synth::Dataset& ds) {
  std::map<std::string, pipeline::SlideInfo> info;
  for (const auto& s : ds.slides) info[s.id] = {s.label, double(s.width), double(s.height)};
  return info;
}

// Accepts the bare id or the directory name.
const synth::SlideRecord& find_slide(const synth::Dataset& ds, const std::string& name, const std::string& root) {
  const std::string id = name.rfind("slide_", 0) == 0 ? name.substr(6) : name;
  for (const auto& s : ds.slides)
    if (s.id == id) return s;
  throw Error(ErrorKind::MissingInput, "slide " + name + " not in " + root);
}

fs::path sidecar_for(const fs::path& bin) {
  auto p = bin;
  p += ".rows.txt";
  return p;
}

void write_loss_trace(const fs::path& path, const pipeline::TrainLog& log) {
  std::string text;
  char buf[48];
  for (std::size_t i = 0; i < log.step_losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu %.17g\n", i, log.step_losses[i]);
    text += buf;
  }
  evalbench::write_text(path, text);
}

// ---- commands ------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  std::size_t slides = 50, classes = 4;
  std::uint64_t seed = 1;
  double lesion_frac = 0.3;
  std::size_t width = 4096, height = 4096;
};

synth::SynthSpec spec_for_classes(std::size_t classes) {
  synth::SynthSpec spec;
  spec.classes = classes;
  switch (classes) {
    case 2: spec.micro = {0, 1}; spec.macro = {0, 1}; break;
    case 3: spec.micro = {0, 0, 1}; spec.macro = {0, 1, 1}; break;
    case 4: break;
    default: throw Error(ErrorKind::Config, "generate supports 2, 3 or 4 classes");
  }
  return spec;
}

int cmd_generate(const GenerateArgs& a) {
  auto spec = spec_for_classes(a.classes);
  spec.lesion_fraction = a.lesion_frac;
  spec.width = a.width;
  spec.height = a.height;
  synth::validate(spec);
  const auto ds = synth::make_synthetic_dataset(spec, a.slides, a.seed);
  synth::write_dataset(ds, a.out);
  double worst = 0;
  for (const auto& s : ds.slides) worst = std::max(worst, std::abs(s.lesion_fraction - a.lesion_frac));
  std::cout << "slides " << ds.slides.size() << "\nsingle_scale_cap " << fmt(synth::single_scale_cap(spec))
            << "\nmax_lesion_fraction_error " << fmt(worst) << "\n";
  return 0;
}

struct FilterArgs {
  std::string dataset, slide, out = "refs.txt";
  std::string mask = "oracle";
};

int cmd_filter(const FilterArgs& a) {
  const auto ds = synth::open_dataset(a.dataset);
  const auto* it = &find_slide(ds, a.slide, a.dataset);
  RunConfig cfg;
  cfg.mask = pipeline::parse_mask(a.mask);
  const auto provider = make_provider(cfg, ds, a.dataset);
  const auto set = sffm::filter_mask(provider->mask_for(*it), it->width, it->height, sffm::kPatchSides,
                                     sffm::kRedThreshold, it->id);
  sffm::write_refs(set.refs, a.out);
  std::cout << set.n1 << " " << set.n2 << " " << set.n3 << "\n";
  return 0;
}

struct ExtractArgs {
  std::string dataset, params, out = "features.bin", slide, refs;
  ConfigFlags flags;
};

int cmd_extract(const ExtractArgs& a) {
  const auto cfg = a.flags.resolve(a.params.empty() ? std::nullopt : manifest_config(a.params));
  const auto ds = synth::open_dataset(a.dataset);
  const auto store = a.params.empty() ? pipeline::init_model(cfg.model, cfg.train.seed) : load_model(a.params, cfg);
  pipeline::FeatureCache cache;
  if (!a.refs.empty()) {
    // A ref dump from `filter` for one slide.
    if (a.slide.empty()) throw Error(ErrorKind::Config, "--refs needs --slide");
    const auto* it = &find_slide(ds, a.slide, a.dataset);
    const auto refs = sffm::read_refs(a.refs);
    const auto data = ds.source->load(*it);
    numcore::NoGraph no_graph;
    cache.dim = cfg.model.encoder.token_dim;
    for (const auto& r : refs) {
      const auto f = msfem::extract(r, sffm::crop_patch(data.image, r), store, cfg.model.encoder);
      for (double v : f.values.data()) cache.values.push_back(static_cast<float>(v));
      cache.rows.push_back({it->id, r.x, r.y, r.d_k, r.scale_code});
    }
  } else {
    auto subset = ds;
    if (!a.slide.empty()) {
      subset.slides = {find_slide(ds, a.slide, a.dataset)};
    }
    const auto provider = make_provider(cfg, ds, a.dataset);
    std::vector<pipeline::SlidePatches> bank;
    for (const auto& rec : subset.slides) {
      const auto data = subset.source->load(rec);
      bank.push_back(pipeline::build_slide_patches(rec, data.image, provider->mask_for(rec), cfg.train,
                                                   cfg.model.encoder.input_side, false));
    }
    cache = pipeline::cache_features(bank, store, cfg.model);
  }
  pipeline::write_cache(cache, a.out, sidecar_for(a.out));
  std::cout << "rows " << cache.count() << "\ndim " << cache.dim << "\n";
  return 0;
}

struct TrainArgs {
  std::string dataset, out = "run", cache, params;
  std::string stage;
  ConfigFlags flags;
};

int cmd_train(const TrainArgs& a) {
  auto cfg = a.flags.resolve();
  if (!a.stage.empty()) cfg.train.stage = pipeline::parse_stage(a.stage);
  const auto ds = synth::open_dataset(a.dataset);
  if (cfg.train.stage == pipeline::Stage::MilOnly) {
    if (a.cache.empty()) throw Error(ErrorKind::Config, "--stage mil_only requires --cache");
    if (!fs::exists(a.cache)) throw Error(ErrorKind::MissingInput, "feature cache " + a.cache + " not found");
  }
  ensure_dir(a.out);
  auto store = pipeline::init_model(cfg.model, cfg.train.seed);
  if (!a.params.empty()) {
    if (!fs::exists(a.params)) throw Error(ErrorKind::MissingInput, "parameter file " + a.params + " not found");
    numcore::load_params_into(store, a.params);
  }
  const auto initial_hash = numcore::params_hash(store);
  auto report = [](std::size_t epoch, const pipeline::EpochLog& e) {
    std::cerr << "epoch " << epoch << " loss " << fmt(e.loss) << " accuracy " << fmt(e.accuracy) << " ("
              << fmt(e.seconds) << " s)\n";
  };
  pipeline::TrainLog log;
  if (cfg.train.stage == pipeline::Stage::MilOnly) {
    const auto cache = pipeline::read_cache(a.cache, sidecar_for(a.cache));
    log = pipeline::train_mil_stage2(cache, slide_infos(ds), store, cfg.model, cfg.train, report);
  } else {
    const auto bank = load_bank(ds, a.dataset, cfg);
    log = pipeline::train_e2e(bank, store, cfg.model, cfg.train, report);
  }
  auto manifest = pipeline::make_manifest(cfg, log, store, fs::absolute(a.dataset).string());
  manifest.set("initial_params_hash", evalbench::format_hash(initial_hash));
  if (!a.params.empty()) manifest.set("init_params", a.params);
  manifest.write(fs::path(a.out) / "manifest.txt");
  write_loss_trace(fs::path(a.out) / "loss_trace.txt", log);
  if (log.diverged) {
    std::cerr << "training diverged: " << log.error << " (last good step " << log.last_good_step << ")\n";
    return 4;
  }
  numcore::save_params(store, fs::path(a.out) / "params.msmp");
  std::cout << "steps " << log.steps << "\nfinal_loss " << (log.epochs.empty() ? "nan" : fmt(log.epochs.back().loss))
            << "\nparams_hash " << evalbench::format_hash(numcore::params_hash(store)) << "\n";
  return 0;
}

struct InferArgs {
  std::string dataset, params, slide, out;
  ConfigFlags flags;
};

int cmd_infer(const InferArgs& a) {
  const auto cfg = a.flags.resolve(manifest_config(a.params));
  const auto ds = synth::open_dataset(a.dataset);
  const auto store = load_model(a.params, cfg);
  const auto provider = make_provider(cfg, ds, a.dataset);
  std::string text = "slide predicted label n1 n2 n3 processed fallback seconds probs\n";
  auto slides = ds.slides;
  if (!a.slide.empty()) slides = {find_slide(ds, a.slide, a.dataset)};
  for (const auto& rec : slides) {
    const auto data = ds.source->load(rec);
    const auto r = pipeline::infer(rec, data.image, *provider, store, cfg.model, cfg.train);
    std::string line = r.slide_id + " " + std::to_string(r.predicted) + " " + std::to_string(rec.label) + " " +
                       std::to_string(r.n1) + " " + std::to_string(r.n2) + " " + std::to_string(r.n3) + " " +
                       std::to_string(r.processed) + " " + (r.fallback ? "1" : "0") + " " + fmt(r.seconds);
    for (double p : r.probs) line += " " + fmt(p);
    if (r.fallback) std::cerr << "warning: slide " << r.slide_id << " has no lesion patches; used all_nonbackground\n";
    text += line + "\n";
  }
  std::cout << text;
  if (!a.out.empty()) {
    ensure_dir(a.out);
    evalbench::write_text(fs::path(a.out) / "report_infer.txt", text);
    command_manifest("infer", cfg, a.dataset).write(fs::path(a.out) / "manifest.txt");
  }
  return 0;
}

struct EvalArgs {
  std::string dataset, params, out;
  std::size_t kfold = 0;
  ConfigFlags flags;
};

int cmd_eval(const EvalArgs& a) {
  const auto cfg = a.flags.resolve(a.params.empty() ? std::nullopt : manifest_config(a.params));
  const auto ds = synth::open_dataset(a.dataset);
  const auto bank = load_bank(ds, a.dataset, cfg);
  std::string text;
  if (a.kfold > 0) {
    std::vector<std::size_t> labels;
    for (const auto& s : bank) labels.push_back(s.record.label);
    std::size_t fold = 0;
    const auto res = evalbench::kfold_run(labels, cfg.model.mil.classes, a.kfold, cfg.train.seed,
                                          [&](const std::vector<std::size_t>& train, const std::vector<std::size_t>& test) {
                                            std::vector<pipeline::SlidePatches> tr, te;
                                            for (auto i : train) tr.push_back(bank[i]);
                                            for (auto i : test) te.push_back(bank[i]);
                                            auto store = pipeline::init_model(cfg.model, cfg.train.seed);
                                            std::cerr << "fold " << fold++ << ": training on " << tr.size() << " slides\n";
                                            const auto log = pipeline::train_e2e(tr, store, cfg.model, cfg.train);
                                            if (log.diverged) throw Error(ErrorKind::Divergence, log.error);
                                            std::vector<std::vector<double>> probs;
                                            evalbench::lesion_accuracy(te, store, cfg.model, cfg.train, &probs);
                                            return probs;
                                          });
    std::cout << "accuracy " << fmt(res.mean_accuracy) << " +- " << fmt(res.sd_accuracy) << "\n";
    std::cout << "auc " << fmt(res.mean_auc) << " +- " << fmt(res.sd_auc) << (res.pooled_auc ? " (pooled)" : "") << "\n";
    text = evalbench::format_kfold(res);
  } else {
    if (a.params.empty()) throw Error(ErrorKind::Config, "eval needs --params or --kfold");
    const auto store = load_model(a.params, cfg);
    std::vector<std::vector<double>> probs;
    std::vector<std::size_t> labels;
    evalbench::lesion_accuracy(bank, store, cfg.model, cfg.train, &probs);
    for (const auto& s : bank) labels.push_back(s.record.label);
    auto rep = evalbench::evaluate(probs, labels, cfg.model.mil.classes);
    std::size_t patches = 0;
    for (const auto& s : bank) patches += s.lesion.size();
    rep.patch_counts["lesion"] = patches;
    text = evalbench::format_report("eval", rep);
    std::cout << text;
  }
  if (!a.out.empty()) {
    ensure_dir(a.out);
    evalbench::write_text(fs::path(a.out) / (a.kfold ? "report_kfold.txt" : "report_eval.txt"), text);
    command_manifest("eval", cfg, a.dataset).write(fs::path(a.out) / "manifest.txt");
  }
  return 0;
}

struct AblateArgs {
  std::string dataset, params, out;
  ConfigFlags flags;
};

int cmd_ablate(const AblateArgs& a) {
  const auto cfg = a.flags.resolve(manifest_config(a.params));
  const auto ds = synth::open_dataset(a.dataset);
  const auto store = load_model(a.params, cfg);
  const auto bank = load_bank(ds, a.dataset, cfg);
  const auto res = evalbench::ablation_run(bank, store, cfg.model, cfg.train);
  const auto text = evalbench::format_ablation(res);
  std::cout << text;
  if (!a.out.empty()) {
    ensure_dir(a.out);
    evalbench::write_text(fs::path(a.out) / "report_ablation.txt", text);
    command_manifest("ablate", cfg, a.dataset).write(fs::path(a.out) / "manifest.txt");
  }
  return 0;
}

struct SweepArgs {
  std::string train, test, sizes = "1,8,32,64", out = "sweep";
  ConfigFlags flags;
};

int cmd_sweep(const SweepArgs& a) {
  const auto cfg = a.flags.resolve();
  const auto sizes = pipeline::parse_sizes(a.sizes);
  const auto tr = synth::open_dataset(a.train);
  const auto te = synth::open_dataset(a.test);
  const auto train_bank = load_bank(tr, a.train, cfg);
  const auto test_bank = load_bank(te, a.test, cfg);
  const auto curve = evalbench::graph_size_sweep(train_bank, test_bank, sizes, cfg.model, cfg.train);
  const auto text = evalbench::format_curve(curve);
  std::cout << text;
  ensure_dir(a.out);
  evalbench::write_text(fs::path(a.out) / "curve.txt", text);
  auto manifest = command_manifest("sweep", cfg, a.train);
  manifest.set("test_dataset", a.test);
  manifest.set("sizes", a.sizes);
  for (const auto& p : curve) manifest.set("train_seconds." + std::to_string(p.batch), fmt(p.train_seconds));
  manifest.write(fs::path(a.out) / "manifest.txt");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"msamil: multi-scale attention MIL for whole-slide image classification"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write a synthetic slide dataset");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--slides", gen.slides, "number of slides")->capture_default_str();
  g->add_option("--classes", gen.classes, "class count (2, 3 or 4)")->capture_default_str();
  g->add_option("--seed", gen.seed, "dataset seed")->capture_default_str();
  g->add_option("--lesion-frac", gen.lesion_frac, "target lesion area fraction in [0.1, 0.5]")->capture_default_str();
  g->add_option("--width", gen.width, "slide width in pixels")->capture_default_str();
  g->add_option("--height", gen.height, "slide height in pixels")->capture_default_str();

  FilterArgs fil;
  auto* f = app.add_subcommand("filter", "run the lesion patch filter on one slide and dump its refs");
  f->add_option("--dataset", fil.dataset, "dataset directory")->required();
  f->add_option("--slide", fil.slide, "slide id")->required();
  f->add_option("--mask", fil.mask, "oracle | file")->capture_default_str();
  f->add_option("--out", fil.out, "ref dump path")->capture_default_str();

  ExtractArgs ext;
  auto* x = app.add_subcommand("extract", "encode lesion patches into a feature cache");
  x->add_option("--dataset", ext.dataset, "dataset directory")->required();
  x->add_option("--params", ext.params, "trained parameters (default: fresh init from the seed)");
  x->add_option("--slide", ext.slide, "restrict to one slide");
  x->add_option("--refs", ext.refs, "ref dump from filter (needs --slide)");
  x->add_option("--out", ext.out, "cache file; rows go to <out>.rows.txt")->capture_default_str();
  ext.flags.attach(x);

  TrainArgs trn;
  auto* t = app.add_subcommand("train", "train end to end or the MIL head on cached features");
  t->add_option("--dataset", trn.dataset, "dataset directory")->required();
  t->add_option("--stage", trn.stage, "e2e | mil_only [e2e]");
  t->add_option("--cache", trn.cache, "feature cache for mil_only");
  t->add_option("--params", trn.params, "initial parameters");
  t->add_option("--out", trn.out, "run directory")->capture_default_str();
  trn.flags.attach(t);

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "classify slides");
  i->add_option("--dataset", inf.dataset, "dataset directory")->required();
  i->add_option("--params", inf.params, "trained parameters")->required();
  i->add_option("--slide", inf.slide, "one slide id (default: all)");
  i->add_option("--out", inf.out, "report directory");
  inf.flags.attach(i);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score trained parameters, or run k-fold training and scoring");
  e->add_option("--dataset", ev.dataset, "dataset directory")->required();
  e->add_option("--params", ev.params, "trained parameters");
  e->add_option("--kfold", ev.kfold, "folds for cross-validation (0: off)")->capture_default_str();
  e->add_option("--out", ev.out, "report directory");
  ev.flags.attach(e);

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "compare patch selection strategies with one set of parameters");
  b->add_option("--dataset", ab.dataset, "dataset directory")->required();
  b->add_option("--params", ab.params, "trained parameters")->required();
  b->add_option("--out", ab.out, "report directory");
  ab.flags.attach(b);

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "train once per graph size B and score each");
  s->add_option("--train", sw.train, "training dataset directory")->required();
  s->add_option("--test", sw.test, "test dataset directory")->required();
  s->add_option("--sizes", sw.sizes, "ascending comma list of B")->capture_default_str();
  s->add_option("--out", sw.out, "output directory")->capture_default_str();
  sw.flags.attach(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 5;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*f) return cmd_filter(fil);
    if (*x) return cmd_extract(ext);
    if (*t) return cmd_train(trn);
    if (*i) return cmd_infer(inf);
    if (*e) return cmd_eval(ev);
    if (*b) return cmd_ablate(ab);
    if (*s) return cmd_sweep(sw);
  } catch (const Error& err) {
    std::cerr << "msamil: " << err.what() << "\n";
    return exit_code_for(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "msamil: " << err.what() << "\n";
    return 1;
  }
  return 0;
}

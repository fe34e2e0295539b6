#include "msamil/evalbench/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "msamil/errors.hpp"

namespace msamil::evalbench {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {m, sd};
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

}  // namespace

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorKind::Input, "accuracy: " + std::to_string(preds.size()) + " predictions for " +
                                      std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw Error(ErrorKind::Input, "accuracy: no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double binary_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw Error(ErrorKind::Input, "auc: score and label counts differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (positive[idx[t]]) {
        rank_sum += midrank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorKind::UndefinedAuc, "auc needs both positive and negative samples");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1) / 2.0) / (p * q);
}

AucResult auc_macro_ovr(const std::vector<std::vector<double>>& probs, std::span<const std::size_t> labels) {
  if (probs.size() != labels.size() || probs.empty()) throw Error(ErrorKind::Input, "auc: probability rows and labels differ");
  const std::size_t classes = probs.front().size();
  AucResult res;
  std::vector<double> col(probs.size());
  std::vector<bool> pos(probs.size());
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t npos = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i].size() != classes) throw Error(ErrorKind::Input, "auc: ragged probability rows");
      col[i] = probs[i][c];
      pos[i] = labels[i] == c;
      npos += pos[i];
    }
    if (npos == 0 || npos == probs.size()) {
      throw Error(ErrorKind::UndefinedAuc, "class " + std::to_string(c) + (npos == 0 ? " has no samples" : " has no negatives"));
    }
    res.per_class.push_back(binary_auc(col, pos));
  }
  res.macro = std::accumulate(res.per_class.begin(), res.per_class.end(), 0.0) / static_cast<double>(classes);
  return res;
}

std::vector<std::vector<std::size_t>> confusion(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                                std::size_t classes) {
  if (preds.size() != labels.size()) throw Error(ErrorKind::Input, "confusion: length mismatch");
  std::vector<std::vector<std::size_t>> m(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] >= classes || preds[i] >= classes) throw Error(ErrorKind::Label, "confusion: class out of range");
    ++m[labels[i]][preds[i]];
  }
  return m;
}

EvalReport evaluate(const std::vector<std::vector<double>>& probs, std::span<const std::size_t> labels,
                    std::size_t classes) {
  std::vector<std::size_t> preds;
  for (const auto& p : probs) preds.push_back(static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()));
  EvalReport r;
  r.accuracy = accuracy(preds, labels);
  r.confusion = confusion(preds, labels, classes);
  try {
    const auto auc = auc_macro_ovr(probs, labels);
    r.auc_macro = auc.macro;
    r.per_class_auc = auc.per_class;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::UndefinedAuc) throw;
    r.auc_defined = false;
  }
  return r;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> labels, std::size_t k,
                                                       std::uint64_t seed) {
  if (k < 2 || k > labels.size()) {
    throw Error(ErrorKind::Input, "k = " + std::to_string(k) + " folds for " + std::to_string(labels.size()) + " samples");
  }
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Rng rng(mix_seed(seed, 0xf01d));
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& [c, members] : by_class) {
    rng.shuffle(members);
    for (auto i : members) folds[next++ % k].push_back(i);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

KFoldResult kfold_run(std::span<const std::size_t> labels, std::size_t classes, std::size_t k, std::uint64_t seed,
                      const FoldTrainer& trainer) {
  const auto folds = stratified_folds(labels, k, seed);
  KFoldResult res;
  std::vector<std::vector<double>> pooled_probs;
  std::vector<std::size_t> pooled_labels;
  std::vector<double> accs, aucs;
  for (const auto& test : folds) {
    std::vector<std::size_t> train;
    std::vector<bool> in_test(labels.size(), false);
    for (auto i : test) in_test[i] = true;
    std::vector<bool> seen(classes, false);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (in_test[i]) continue;
      train.push_back(i);
      if (labels[i] < classes) seen[labels[i]] = true;
    }
    for (std::size_t c = 0; c < classes; ++c) {
      if (!seen[c]) throw Error(ErrorKind::Stratification, "class " + std::to_string(c) + " is absent from a training fold");
    }
    const auto probs = trainer(train, test);
    if (probs.size() != test.size()) throw Error(ErrorKind::Input, "trainer returned the wrong number of rows");
    std::vector<std::size_t> fold_labels;
    for (auto i : test) fold_labels.push_back(labels[i]);
    const auto rep = evaluate(probs, fold_labels, classes);
    FoldResult fr{test, rep.accuracy, rep.auc_macro, rep.auc_defined};
    res.folds.push_back(fr);
    accs.push_back(rep.accuracy);
    if (rep.auc_defined) aucs.push_back(rep.auc_macro);
    pooled_probs.insert(pooled_probs.end(), probs.begin(), probs.end());
    pooled_labels.insert(pooled_labels.end(), fold_labels.begin(), fold_labels.end());
  }
  std::tie(res.mean_accuracy, res.sd_accuracy) = mean_sd(accs);
  if (aucs.size() == folds.size()) {
    std::tie(res.mean_auc, res.sd_auc) = mean_sd(aucs);
  } else {
    res.pooled_auc = true;
    res.mean_auc = auc_macro_ovr(pooled_probs, pooled_labels).macro;
    res.sd_auc = 0.0;
  }
  return res;
}

double lesion_accuracy(const std::vector<pipeline::SlidePatches>& slides, const numcore::ParamStore& store,
                       const pipeline::ModelConfig& model, const pipeline::TrainConfig& cfg,
                       std::vector<std::vector<double>>* probs) {
  std::vector<std::size_t> preds, labels;
  Rng rng(cfg.seed);
  for (const auto& s : slides) {
    const auto p = pipeline::predict(s, pipeline::PatchSource::LesionOnly, store, model, cfg, rng);
    preds.push_back(p.predicted);
    labels.push_back(s.record.label);
    if (probs) probs->push_back(p.probs);
  }
  return accuracy(preds, labels);
}

AblationResult ablation_run(const std::vector<pipeline::SlidePatches>& slides, const numcore::ParamStore& store,
                            const pipeline::ModelConfig& model, const pipeline::TrainConfig& cfg) {
  using pipeline::PatchSource;
  AblationResult res;
  res.params_hash = numcore::params_hash(store);
  for (const auto& s : slides) {
    res.lesion_counts.push_back(s.lesion.size());
    res.all_counts.push_back(s.nonbackground().size());
  }
  const std::pair<const char*, PatchSource> strategies[] = {
      {"all", PatchSource::AllNonBackground}, {"random", PatchSource::RandomK}, {"lesion", PatchSource::LesionOnly}};
  for (const auto& [name, source] : strategies) {
    Rng rng(mix_seed(cfg.seed, 0xab1a));
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<double>> probs;
    std::vector<std::size_t> labels;
    StrategyRow row;
    row.name = name;
    // Crops were prepared once up front; charge each strategy for the ones it used.
    double prep = 0.0;
    for (const auto& s : slides) {
      const auto p = pipeline::predict(s, source, store, model, cfg, rng);
      probs.push_back(p.probs);
      labels.push_back(s.record.label);
      row.patches += p.instances;
      for (auto i : p.chosen) prep += i < s.prep_seconds.size() ? s.prep_seconds[i] : 0.0;
      if (source == PatchSource::LesionOnly) prep += s.filter_seconds;
    }
    row.seconds = seconds_since(t0) + prep;
    const auto rep = evaluate(probs, labels, model.mil.classes);
    row.accuracy = rep.accuracy;
    row.auc = rep.auc_macro;
    row.auc_defined = rep.auc_defined;
    if (numcore::params_hash(store) != res.params_hash) {
      throw Error(ErrorKind::Protocol, "parameters changed during the ablation");
    }
    res.rows.push_back(row);
  }
  return res;
}

std::vector<SweepPoint> graph_size_sweep(const std::vector<pipeline::SlidePatches>& train,
                                         const std::vector<pipeline::SlidePatches>& test,
                                         const std::vector<std::size_t>& sizes, const pipeline::ModelConfig& model,
                                         const pipeline::TrainConfig& cfg) {
  if (sizes.empty() || sizes.front() < 1 || !std::is_sorted(sizes.begin(), sizes.end())) {
    throw Error(ErrorKind::Config, "sweep sizes must be ascending and at least 1");
  }
  std::vector<SweepPoint> curve;
  for (auto b : sizes) {
    auto point_cfg = cfg;
    point_cfg.batch = b;
    auto store = pipeline::init_model(model, cfg.seed);
    const auto log = pipeline::train_e2e(train, store, model, point_cfg);
    if (log.diverged) throw Error(ErrorKind::Divergence, "sweep point B=" + std::to_string(b) + ": " + log.error);
    curve.push_back(SweepPoint{b, lesion_accuracy(test, store, model, point_cfg), log.seconds});
  }
  return curve;
}

std::string format_hash(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_report(const std::string& name, const EvalReport& r) {
  std::string out = "name=" + name + "\n";
  out += "accuracy=" + fmt(r.accuracy) + "\n";
  out += "auc_macro=" + (r.auc_defined ? fmt(r.auc_macro) : std::string("undefined")) + "\n";
  for (std::size_t c = 0; c < r.per_class_auc.size(); ++c) out += "auc_class_" + std::to_string(c) + "=" + fmt(r.per_class_auc[c]) + "\n";
  for (const auto& [k, v] : r.patch_counts) out += "patches_" + k + "=" + std::to_string(v) + "\n";
  for (const auto& [k, v] : r.seconds) out += "seconds_" + k + "=" + fmt(v, 3) + "\n";
  out += "\nconfusion (rows: true, cols: predicted)\n";
  for (const auto& row : r.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) out += (j ? " " : "") + pad(std::to_string(row[j]), 5);
    out += "\n";
  }
  return out;
}

std::string format_kfold(const KFoldResult& r) {
  std::string out = "folds=" + std::to_string(r.folds.size()) + "\n";
  out += "accuracy_mean=" + fmt(r.mean_accuracy) + "\naccuracy_sd=" + fmt(r.sd_accuracy) + "\n";
  out += "auc_mean=" + fmt(r.mean_auc) + "\nauc_sd=" + fmt(r.sd_auc) + "\n";
  out += std::string("auc_pooled=") + (r.pooled_auc ? "true" : "false") + "\n\n";
  out += pad("fold", 6) + pad("size", 6) + pad("accuracy", 10) + "auc\n";
  for (std::size_t i = 0; i < r.folds.size(); ++i) {
    const auto& f = r.folds[i];
    out += pad(std::to_string(i), 6) + pad(std::to_string(f.test.size()), 6) + pad(fmt(f.accuracy), 10) +
           (f.auc_defined ? fmt(f.auc) : std::string("undefined")) + "\n";
  }
  return out;
}

std::string format_ablation(const AblationResult& r) {
  std::string out = "params_hash=" + format_hash(r.params_hash) + "\n\n";
  out += pad("strategy", 10) + pad("accuracy", 10) + pad("auc", 10) + pad("patches", 9) + "seconds\n";
  for (const auto& row : r.rows) {
    out += pad(row.name, 10) + pad(fmt(row.accuracy), 10) + pad(row.auc_defined ? fmt(row.auc) : "undefined", 10) +
           pad(std::to_string(row.patches), 9) + fmt(row.seconds, 3) + "\n";
  }
  return out;
}

std::string format_curve(const std::vector<SweepPoint>& curve) {
  std::string out;
  for (const auto& p : curve) out += std::to_string(p.batch) + " " + fmt(p.accuracy) + "\n";
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  os << text;
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace msamil::evalbench

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msamil/kvfile.hpp"
#include "msamil/numcore/params.hpp"
#include "msamil/pipeline/pipeline.hpp"

namespace msamil::evalbench {

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels);

// Mann-Whitney statistic with midranks for ties.
double binary_auc(std::span<const double> scores, const std::vector<bool>& positive);

struct AucResult {
  double macro = 0.0;
  std::vector<double> per_class;
};

// probs is n rows of C class scores. Throws UndefinedAuc naming a class with no positives or no negatives.
AucResult auc_macro_ovr(const std::vector<std::vector<double>>& probs, std::span<const std::size_t> labels);

std::vector<std::vector<std::size_t>> confusion(std::span<const std::size_t> preds,
                                                std::span<const std::size_t> labels, std::size_t classes);

struct EvalReport {
  double accuracy = 0.0;
  double auc_macro = 0.0;
  bool auc_defined = true;
  std::vector<double> per_class_auc;
  std::vector<std::vector<std::size_t>> confusion;
  std::map<std::string, std::size_t> patch_counts;
  std::map<std::string, double> seconds;
};

EvalReport evaluate(const std::vector<std::vector<double>>& probs, std::span<const std::size_t> labels,
                    std::size_t classes);

// Stratified assignment: each class is shuffled with the seed and dealt round-robin,
// the fold counter carrying over between classes. Returns the test indices of each fold.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> labels, std::size_t k,
                                                       std::uint64_t seed);

struct FoldResult {
  std::vector<std::size_t> test;
  double accuracy = 0.0;
  double auc = 0.0;
  bool auc_defined = false;
};

struct KFoldResult {
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0, sd_accuracy = 0.0;
  double mean_auc = 0.0, sd_auc = 0.0;
  bool pooled_auc = false;  // some fold lacked a class; mean_auc is the pooled out-of-fold AUC
};

// Receives train and test indices, returns one probability row per test index.
using FoldTrainer = std::function<std::vector<std::vector<double>>(const std::vector<std::size_t>& train,
                                                                   const std::vector<std::size_t>& test)>;

KFoldResult kfold_run(std::span<const std::size_t> labels, std::size_t classes, std::size_t k, std::uint64_t seed,
                      const FoldTrainer& trainer);

struct StrategyRow {
  std::string name;
  double accuracy = 0.0;
  double auc = 0.0;
  bool auc_defined = true;
  std::size_t patches = 0;
  double seconds = 0.0;
};

struct AblationResult {
  std::vector<StrategyRow> rows;  // all, random, lesion
  std::uint64_t params_hash = 0;
  std::vector<std::size_t> lesion_counts, all_counts;  // per slide
};

/// Evaluates one set of parameters under the three patch-selection strategies.
AblationResult ablation_run(const std::vector<pipeline::SlidePatches>& slides, const numcore::ParamStore& store,
                            const pipeline::ModelConfig& model, const pipeline::TrainConfig& cfg);

struct SweepPoint {
  std::size_t batch = 0;
  double accuracy = 0.0;
  double train_seconds = 0.0;
};

// Independent end-to-end training per B from the same initial seed, scored on full lesion bags.
std::vector<SweepPoint> graph_size_sweep(const std::vector<pipeline::SlidePatches>& train,
                                         const std::vector<pipeline::SlidePatches>& test,
                                         const std::vector<std::size_t>& sizes, const pipeline::ModelConfig& model,
                                         const pipeline::TrainConfig& cfg);

double lesion_accuracy(const std::vector<pipeline::SlidePatches>& slides, const numcore::ParamStore& store,
                       const pipeline::ModelConfig& model, const pipeline::TrainConfig& cfg,
                       std::vector<std::vector<double>>* probs = nullptr);

std::string format_hash(std::uint64_t h);
std::string format_report(const std::string& name, const EvalReport& report);
std::string format_kfold(const KFoldResult& result);
std::string format_ablation(const AblationResult& result);
std::string format_curve(const std::vector<SweepPoint>& curve);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace msamil::evalbench

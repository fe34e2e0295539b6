#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "msamil/iaam/iaam.hpp"
#include "msamil/kvfile.hpp"
#include "msamil/numcore/optimizer.hpp"
#include "msamil/numcore/params.hpp"
#include "msamil/pipeline/config.hpp"
#include "msamil/sffm/sffm.hpp"
#include "msamil/synthwsi/dataset.hpp"

namespace msamil::pipeline {

inline constexpr double kBackgroundLevel = 240.0;

// enc.* then mil.* parameters, seeded.
numcore::ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed);
std::vector<numcore::Tensor> extractor_params(const numcore::ParamStore& store);
std::vector<numcore::Tensor> mil_params(const numcore::ParamStore& store);

/// Per-slide patch inputs, resized and normalized once. refs holds the full
/// grid of the configured sides followed by any lesion ref that is off the grid.
struct SlidePatches {
  synth::SlideRecord record;
  std::vector<sffm::PatchRef> refs;
  std::vector<numcore::Tensor> inputs;      // S x S x 3, aligned with refs
  std::vector<bool> background;             // mean > 240 on every channel
  std::vector<std::size_t> grid;            // indices of full-grid refs
  std::vector<std::size_t> lesion;          // indices of run_sffm refs, run order
  sffm::PatchSet lesion_set;
  std::vector<double> prep_seconds;        // crop + resize + to_input per ref
  double filter_seconds = 0.0;             // lesion filter scan

  std::vector<std::size_t> nonbackground() const;
};

bool is_background(const synth::Raster& patch);

SlidePatches build_slide_patches(const synth::SlideRecord& record, const synth::PyramidImage& image,
                                 const synth::LesionMask& mask, const TrainConfig& cfg, std::size_t input_side,
                                 bool include_grid = true);

std::vector<SlidePatches> build_bank(const synth::Dataset& dataset, const sffm::MaskProvider& provider,
                                     const TrainConfig& cfg, std::size_t input_side, std::size_t workers = 1);

/// Indices into slide.refs, ascending. all_nonbackground and lesion_only draw
/// min(B, available) without replacement; random_k draws the per-scale quotas.
std::vector<std::size_t> select_batch(const SlidePatches& slide, PatchSource source, std::size_t batch,
                                      const std::array<std::size_t, 3>& quotas, Rng& rng);
std::vector<std::size_t> candidates(const SlidePatches& slide, PatchSource source);

// Encodes the chosen inputs (recording when a graph is active) into a bag.
iaam::Bag make_bag(const SlidePatches& slide, const std::vector<std::size_t>& chosen, const numcore::ParamStore& store,
                   const ModelConfig& cfg);

struct StepResult {
  double loss = 0.0;
  std::size_t predicted = 0;
};

/// One joint step on one slide: encode B patches inside the graph, run the MIL
/// head, cross-entropy, backward through both parameter groups, optimizer.
StepResult e2e_train_step(const SlidePatches& slide, numcore::ParamStore& store, const ModelConfig& model,
                          const TrainConfig& cfg, numcore::Sgd& opt, Rng& rng, std::size_t step_index);

struct EpochLog {
  double loss = 0.0;
  double accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;
  std::size_t steps = 0;
  double seconds = 0.0;
  bool diverged = false;
  std::size_t last_good_step = 0;
  std::string error;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochLog&)>;

// Stops at the first divergence and reports it in the log instead of throwing.
TrainLog train_e2e(const std::vector<SlidePatches>& slides, numcore::ParamStore& store, const ModelConfig& model,
                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct Prediction {
  std::size_t predicted = 0;
  std::vector<double> probs;
  std::size_t instances = 0;
  std::vector<std::size_t> chosen;  // indices into SlidePatches::refs
};

Prediction predict(const SlidePatches& slide, PatchSource source, const numcore::ParamStore& store,
                   const ModelConfig& model, const TrainConfig& cfg, Rng& rng);

// Feature cache.
struct CacheRow {
  std::string slide_id;
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::size_t d_k = 0;
  int scale_code = 0;
  bool operator==(const CacheRow&) const = default;
};

struct FeatureCache {
  std::size_t dim = 0;
  std::vector<float> values;  // rows x dim
  std::vector<CacheRow> rows;

  std::size_t count() const { return rows.size(); }
  bool operator==(const FeatureCache&) const = default;
};

// "MSML", u32 version 1, u32 count, u32 dim, then count*dim little-endian float32.
void write_cache(const FeatureCache& cache, const std::filesystem::path& bin, const std::filesystem::path& sidecar);
FeatureCache read_cache(const std::filesystem::path& bin, const std::filesystem::path& sidecar);
std::vector<std::uint8_t> encode_cache(const FeatureCache& cache);
FeatureCache decode_cache(const std::vector<std::uint8_t>& bytes, const std::string& sidecar_text);
std::string sidecar_text(const FeatureCache& cache);

// Inference-mode features of every lesion ref, slides in order, run order within a slide.
FeatureCache cache_features(const std::vector<SlidePatches>& slides, const numcore::ParamStore& store,
                            const ModelConfig& model);

struct SlideInfo {
  std::size_t label = 0;
  double width = 0.0;
  double height = 0.0;
};

// MIL-only training on full cached bags; extractor tensors take no part in the graph.
TrainLog train_mil_stage2(const FeatureCache& cache, const std::map<std::string, SlideInfo>& slides,
                          numcore::ParamStore& store, const ModelConfig& model, const TrainConfig& cfg,
                          const EpochCallback& on_epoch = {});

Prediction predict_cached(const FeatureCache& cache, const std::string& slide_id, const SlideInfo& info,
                          const numcore::ParamStore& store, const ModelConfig& model);

struct InferReport {
  std::string slide_id;
  std::size_t predicted = 0;
  std::vector<double> probs;
  std::size_t n1 = 0, n2 = 0, n3 = 0;
  std::size_t processed = 0;
  bool fallback = false;  // empty lesion set, all_nonbackground used
  double seconds = 0.0;   // crop through classification, model loading excluded
};

InferReport infer(const synth::SlideRecord& record, const synth::PyramidImage& image, const sffm::MaskProvider& provider,
                  const numcore::ParamStore& store, const ModelConfig& model, const TrainConfig& cfg);

/// Run manifest: seed, config echo under "config.", per-epoch loss/accuracy, timing, final parameter hash.
KvFile make_manifest(const RunConfig& cfg, const TrainLog& log, const numcore::ParamStore& store,
                     const std::string& dataset);
RunConfig config_from_manifest(const KvFile& manifest);

}  // namespace msamil::pipeline

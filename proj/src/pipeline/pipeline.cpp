#include "msamil/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "msamil/errors.hpp"
#include "msamil/msfem/encoder.hpp"
#include "msamil/numcore/ops.hpp"

namespace msamil::pipeline {

using numcore::Tensor;

namespace {

constexpr std::uint64_t kTrainSalt = 0x7a1e;
constexpr std::uint64_t kStage2Salt = 0x57a2;
constexpr std::uint64_t kInitSalt = 0x1417;
constexpr char kCacheMagic[4] = {'M', 'S', 'M', 'L'};
constexpr std::uint32_t kCacheVersion = 1;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<Tensor> with_prefix(const numcore::ParamStore& store, const std::string& prefix) {
  std::vector<Tensor> out;
  for (const auto& e : store.entries())
    if (e.name.rfind(prefix, 0) == 0) out.push_back(e.tensor);
  return out;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw Error(ErrorKind::Format, "feature cache truncated at byte " + std::to_string(pos));
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

iaam::Bag cached_bag(const FeatureCache& cache, const std::vector<std::size_t>& rows, const SlideInfo& info) {
  std::vector<double> values(rows.size() * cache.dim);
  iaam::Bag bag;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    for (std::size_t j = 0; j < cache.dim; ++j) values[i * cache.dim + j] = cache.values[r * cache.dim + j];
    const auto& row = cache.rows[r];
    bag.pos.push_back({static_cast<double>(row.x), static_cast<double>(row.y), row.scale_code});
  }
  bag.features = Tensor({rows.size(), cache.dim}, std::move(values));
  bag.width = info.width;
  bag.height = info.height;
  bag.label = info.label;
  return bag;
}

std::map<std::string, std::vector<std::size_t>> rows_by_slide(const FeatureCache& cache) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < cache.rows.size(); ++i) out[cache.rows[i].slide_id].push_back(i);
  return out;
}

}  // namespace

numcore::ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  numcore::ParamStore store;
  Rng rng(mix_seed(seed, kInitSalt));
  msfem::init_encoder(store, cfg.encoder, rng);
  iaam::init_iaam(store, cfg.mil, rng);
  return store;
}

std::vector<Tensor> extractor_params(const numcore::ParamStore& store) { return with_prefix(store, "enc."); }
std::vector<Tensor> mil_params(const numcore::ParamStore& store) { return with_prefix(store, "mil."); }

bool is_background(const synth::Raster& patch) {
  std::array<double, 3> sum{};
  for (std::size_t i = 0; i < patch.pixels.size(); ++i) sum[i % 3] += patch.pixels[i];
  const double n = static_cast<double>(patch.width * patch.height);
  return sum[0] / n > kBackgroundLevel && sum[1] / n > kBackgroundLevel && sum[2] / n > kBackgroundLevel;
}

std::vector<std::size_t> SlidePatches::nonbackground() const {
  std::vector<std::size_t> out;
  for (auto i : grid)
    if (!background[i]) out.push_back(i);
  return out;
}

SlidePatches build_slide_patches(const synth::SlideRecord& record, const synth::PyramidImage& image,
                                 const synth::LesionMask& mask, const TrainConfig& cfg, std::size_t input_side,
                                 bool include_grid) {
  SlidePatches sp;
  sp.record = record;
  const auto t_filter = std::chrono::steady_clock::now();
  sp.lesion_set = sffm::filter_mask(mask, image.width(), image.height(), cfg.sides, cfg.theta, record.id);
  sp.filter_seconds = seconds_since(t_filter);
  if (include_grid) sp.refs = sffm::full_grid(image.width(), image.height(), cfg.sides);
  sp.grid.resize(sp.refs.size());
  std::iota(sp.grid.begin(), sp.grid.end(), 0);
  std::map<sffm::PatchRef, std::size_t> index;
  for (std::size_t i = 0; i < sp.refs.size(); ++i) index[sp.refs[i]] = i;
  for (const auto& r : sp.lesion_set.refs) {
    auto it = index.find(r);
    if (it == index.end()) {
      it = index.emplace(r, sp.refs.size()).first;
      sp.refs.push_back(r);
    }
    sp.lesion.push_back(it->second);
  }
  sp.inputs.reserve(sp.refs.size());
  for (const auto& r : sp.refs) {
    const auto t0 = std::chrono::steady_clock::now();
    const synth::Raster crop = sffm::crop_patch(image, r);
    sp.background.push_back(is_background(crop));
    sp.inputs.push_back(msfem::to_input(msfem::resize_patch(crop, input_side)));
    sp.prep_seconds.push_back(seconds_since(t0));
  }
  return sp;
}

std::vector<SlidePatches> build_bank(const synth::Dataset& dataset, const sffm::MaskProvider& provider,
                                     const TrainConfig& cfg, std::size_t input_side, std::size_t workers) {
  std::vector<SlidePatches> bank(dataset.slides.size());
  parallel_for(dataset.slides.size(), workers, [&](std::size_t i) {
    const auto& rec = dataset.slides[i];
    const synth::SlideData data = dataset.source->load(rec);
    bank[i] = build_slide_patches(rec, data.image, provider.mask_for(rec), cfg, input_side);
  });
  return bank;
}

std::vector<std::size_t> candidates(const SlidePatches& slide, PatchSource source) {
  return source == PatchSource::LesionOnly ? slide.lesion : slide.nonbackground();
}

std::vector<std::size_t> select_batch(const SlidePatches& slide, PatchSource source, std::size_t batch,
                                      const std::array<std::size_t, 3>& quotas, Rng& rng) {
  auto pool = candidates(slide, source);
  if (pool.empty()) {
    throw Error(ErrorKind::EmptySlide, "slide " + slide.record.id + " has no " + to_string(source) + " patches");
  }
  auto draw = [&](std::vector<std::size_t>& from, std::size_t k, std::vector<std::size_t>& into) {
    k = std::min(k, from.size());
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(from.size() - i));
      std::swap(from[i], from[j]);
      into.push_back(from[i]);
    }
  };
  std::vector<std::size_t> chosen;
  if (source == PatchSource::RandomK) {
    std::array<std::vector<std::size_t>, 3> per_scale;
    for (auto i : pool) per_scale[static_cast<std::size_t>(slide.refs[i].scale_code)].push_back(i);
    for (std::size_t s = 0; s < 3; ++s) draw(per_scale[s], quotas[s], chosen);
  } else if (batch >= pool.size()) {
    chosen = pool;
  } else {
    draw(pool, batch, chosen);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

iaam::Bag make_bag(const SlidePatches& slide, const std::vector<std::size_t>& chosen, const numcore::ParamStore& store,
                   const ModelConfig& cfg) {
  std::vector<Tensor> feats;
  feats.reserve(chosen.size());
  iaam::Bag bag;
  for (auto i : chosen) {
    feats.push_back(msfem::extract_input(slide.inputs[i], store, cfg.encoder));
    const auto& r = slide.refs[i];
    bag.pos.push_back({static_cast<double>(r.x), static_cast<double>(r.y), r.scale_code});
  }
  bag.features = feats.size() == 1 ? feats.front() : numcore::concat_rows(feats);
  bag.width = static_cast<double>(slide.record.width);
  bag.height = static_cast<double>(slide.record.height);
  bag.label = slide.record.label;
  return bag;
}

StepResult e2e_train_step(const SlidePatches& slide, numcore::ParamStore& store, const ModelConfig& model,
                          const TrainConfig& cfg, numcore::Sgd& opt, Rng& rng, std::size_t step_index) {
  numcore::RecordGraph recording;
  const auto chosen = select_batch(slide, cfg.source, cfg.batch, cfg.quotas, rng);
  iaam::IaamOutput out;
  try {
    out = iaam::iaam_forward(make_bag(slide, chosen, store, model), store, model.mil);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numeric) throw;
    throw Error(ErrorKind::Divergence, std::string(e.what()) + " at step " + std::to_string(step_index));
  }
  if (!all_finite(out.logits.data())) {
    throw Error(ErrorKind::Divergence, "non-finite logits at step " + std::to_string(step_index));
  }
  const Tensor loss = numcore::cross_entropy(out.logits, slide.record.label);
  if (!std::isfinite(loss.item())) {
    throw Error(ErrorKind::Divergence, "non-finite loss at step " + std::to_string(step_index));
  }
  loss.backward();
  opt.accumulate_and_step();
  return StepResult{loss.item(), argmax(out.probs.data())};
}

TrainLog train_e2e(const std::vector<SlidePatches>& slides, numcore::ParamStore& store, const ModelConfig& model,
                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(model);
  validate(cfg);
  if (slides.empty()) throw Error(ErrorKind::Input, "no training slides");
  const auto t_start = std::chrono::steady_clock::now();
  numcore::Sgd opt(store.tensors(), cfg.learning_rate, cfg.accum_steps);
  Rng rng(mix_seed(cfg.seed, kTrainSalt));
  TrainLog log;
  std::vector<std::size_t> order(slides.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs && !log.diverged; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0, done = 0;
    for (auto i : order) {
      try {
        const auto r = e2e_train_step(slides[i], store, model, cfg, opt, rng, log.steps);
        loss_sum += r.loss;
        correct += r.predicted == slides[i].record.label;
        log.step_losses.push_back(r.loss);
        log.last_good_step = log.steps;
        ++log.steps;
        ++done;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Divergence) throw;
        log.diverged = true;
        log.error = e.what();
        store.clear_grads();
        break;
      }
    }
    if (done == 0) break;
    EpochLog el{loss_sum / static_cast<double>(done), static_cast<double>(correct) / static_cast<double>(done),
                seconds_since(t0)};
    log.epochs.push_back(el);
    if (on_epoch) on_epoch(epoch, el);
  }
  log.seconds = seconds_since(t_start);
  return log;
}

Prediction predict(const SlidePatches& slide, PatchSource source, const numcore::ParamStore& store,
                   const ModelConfig& model, const TrainConfig& cfg, Rng& rng) {
  numcore::NoGraph no_graph;
  const auto chosen = select_batch(slide, source, std::numeric_limits<std::size_t>::max(), cfg.quotas, rng);
  const auto out = iaam::iaam_forward(make_bag(slide, chosen, store, model), store, model.mil);
  Prediction p;
  p.probs.assign(out.probs.data().begin(), out.probs.data().end());
  p.predicted = argmax(p.probs);
  p.instances = chosen.size();
  p.chosen = chosen;
  return p;
}

std::vector<std::uint8_t> encode_cache(const FeatureCache& cache) {
  if (cache.values.size() != cache.rows.size() * cache.dim) {
    throw Error(ErrorKind::Format, "feature cache holds " + std::to_string(cache.values.size()) + " values for " +
                                       std::to_string(cache.rows.size()) + " rows of width " + std::to_string(cache.dim));
  }
  std::vector<std::uint8_t> out(kCacheMagic, kCacheMagic + 4);
  put_u32(out, kCacheVersion);
  put_u32(out, static_cast<std::uint32_t>(cache.rows.size()));
  put_u32(out, static_cast<std::uint32_t>(cache.dim));
  for (float f : cache.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  return out;
}

std::string sidecar_text(const FeatureCache& cache) {
  std::string out;
  for (const auto& r : cache.rows) {
    out += r.slide_id + ' ' + std::to_string(r.x) + ' ' + std::to_string(r.y) + ' ' + std::to_string(r.d_k) + ' ' +
           std::to_string(r.scale_code) + '\n';
  }
  return out;
}

FeatureCache decode_cache(const std::vector<std::uint8_t>& bytes, const std::string& sidecar) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCacheMagic, 4) != 0) {
    throw Error(ErrorKind::Format, "feature cache: bad magic");
  }
  std::size_t pos = 4;
  if (get_u32(bytes, pos) != kCacheVersion) throw Error(ErrorKind::Format, "feature cache: unsupported version");
  const std::size_t count = get_u32(bytes, pos);
  FeatureCache cache;
  cache.dim = get_u32(bytes, pos);
  if (bytes.size() - pos != count * cache.dim * 4) {
    throw Error(ErrorKind::Format, "feature cache: expected " + std::to_string(count * cache.dim * 4) +
                                       " payload bytes, found " + std::to_string(bytes.size() - pos));
  }
  cache.values.resize(count * cache.dim);
  for (auto& f : cache.values) {
    const std::uint32_t bits = get_u32(bytes, pos);
    std::memcpy(&f, &bits, 4);
  }
  std::istringstream is(sidecar);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    CacheRow r;
    std::string extra;
    if (!(ls >> r.slide_id >> r.x >> r.y >> r.d_k >> r.scale_code) || (ls >> extra)) {
      throw Error(ErrorKind::Format, "sidecar line " + std::to_string(lineno) + ": expected 'slide_id x y d_k scale_code'");
    }
    cache.rows.push_back(r);
  }
  if (cache.rows.size() != count) {
    throw Error(ErrorKind::Format, "feature cache has " + std::to_string(count) + " rows but sidecar lists " +
                                       std::to_string(cache.rows.size()));
  }
  return cache;
}

void write_cache(const FeatureCache& cache, const std::filesystem::path& bin, const std::filesystem::path& sidecar) {
  const auto bytes = encode_cache(cache);
  std::ofstream os(bin, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + bin.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorKind::Io, "write failed for " + bin.string());
  std::ofstream ss(sidecar);
  if (!ss) throw Error(ErrorKind::Io, "cannot write " + sidecar.string());
  ss << sidecar_text(cache);
  if (!ss) throw Error(ErrorKind::Io, "write failed for " + sidecar.string());
}

FeatureCache read_cache(const std::filesystem::path& bin, const std::filesystem::path& sidecar) {
  std::ifstream is(bin, std::ios::binary);
  if (!is) throw Error(ErrorKind::MissingInput, "cannot open feature cache " + bin.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  std::ifstream ss(sidecar);
  if (!ss) throw Error(ErrorKind::MissingInput, "cannot open sidecar " + sidecar.string());
  std::stringstream text;
  text << ss.rdbuf();
  return decode_cache(bytes, text.str());
}

FeatureCache cache_features(const std::vector<SlidePatches>& slides, const numcore::ParamStore& store,
                            const ModelConfig& model) {
  numcore::NoGraph no_graph;
  FeatureCache cache;
  cache.dim = model.encoder.token_dim;
  for (const auto& s : slides) {
    for (auto i : s.lesion) {
      const Tensor f = msfem::extract_input(s.inputs[i], store, model.encoder);
      for (double v : f.data()) cache.values.push_back(static_cast<float>(v));
      const auto& r = s.refs[i];
      cache.rows.push_back(CacheRow{s.record.id, r.x, r.y, r.d_k, r.scale_code});
    }
  }
  return cache;
}

TrainLog train_mil_stage2(const FeatureCache& cache, const std::map<std::string, SlideInfo>& slides,
                          numcore::ParamStore& store, const ModelConfig& model, const TrainConfig& cfg,
                          const EpochCallback& on_epoch) {
  validate(model);
  if (cache.count() == 0) throw Error(ErrorKind::Input, "stage 2 needs a non-empty feature cache");
  if (cache.dim != model.mil.dim) {
    throw Error(ErrorKind::Format, "cache width " + std::to_string(cache.dim) + " differs from mil dim " +
                                       std::to_string(model.mil.dim));
  }
  const auto groups = rows_by_slide(cache);
  std::vector<std::pair<iaam::Bag, std::string>> bags;
  for (const auto& [id, rows] : groups) {
    const auto it = slides.find(id);
    if (it == slides.end()) throw Error(ErrorKind::Format, "cache row for unknown slide " + id);
    bags.emplace_back(cached_bag(cache, rows, it->second), id);
  }
  const auto t_start = std::chrono::steady_clock::now();
  numcore::Sgd opt(mil_params(store), cfg.stage2_learning_rate, cfg.accum_steps);
  Rng rng(mix_seed(cfg.seed, kStage2Salt));
  TrainLog log;
  std::vector<std::size_t> order(bags.size());
  for (std::size_t epoch = 0; epoch < cfg.stage2_epochs && !log.diverged; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0, done = 0;
    for (auto i : order) {
      numcore::RecordGraph recording;
      const auto out = iaam::iaam_forward(bags[i].first, store, model.mil);
      const Tensor loss = numcore::cross_entropy(out.logits, bags[i].first.label);
      if (!std::isfinite(loss.item())) {
        log.diverged = true;
        log.error = "divergence error: non-finite loss at step " + std::to_string(log.steps);
        store.clear_grads();
        break;
      }
      loss.backward();
      opt.accumulate_and_step();
      loss_sum += loss.item();
      correct += argmax(out.probs.data()) == bags[i].first.label;
      log.step_losses.push_back(loss.item());
      log.last_good_step = log.steps;
      ++log.steps;
      ++done;
    }
    if (done == 0) break;
    EpochLog el{loss_sum / static_cast<double>(done), static_cast<double>(correct) / static_cast<double>(done),
                seconds_since(t0)};
    log.epochs.push_back(el);
    if (on_epoch) on_epoch(epoch, el);
  }
  log.seconds = seconds_since(t_start);
  return log;
}

Prediction predict_cached(const FeatureCache& cache, const std::string& slide_id, const SlideInfo& info,
                          const numcore::ParamStore& store, const ModelConfig& model) {
  numcore::NoGraph no_graph;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < cache.rows.size(); ++i)
    if (cache.rows[i].slide_id == slide_id) rows.push_back(i);
  if (rows.empty()) throw Error(ErrorKind::EmptySlide, "no cached features for slide " + slide_id);
  const auto out = iaam::iaam_forward(cached_bag(cache, rows, info), store, model.mil);
  Prediction p;
  p.probs.assign(out.probs.data().begin(), out.probs.data().end());
  p.predicted = argmax(p.probs);
  p.instances = rows.size();
  return p;
}

InferReport infer(const synth::SlideRecord& record, const synth::PyramidImage& image, const sffm::MaskProvider& provider,
                  const numcore::ParamStore& store, const ModelConfig& model, const TrainConfig& cfg) {
  numcore::NoGraph no_graph;
  const auto t0 = std::chrono::steady_clock::now();
  SlidePatches sp = build_slide_patches(record, image, provider.mask_for(record), cfg, model.encoder.input_side, false);
  InferReport rep;
  rep.slide_id = record.id;
  rep.n1 = sp.lesion_set.n1;
  rep.n2 = sp.lesion_set.n2;
  rep.n3 = sp.lesion_set.n3;
  std::vector<std::size_t> chosen = sp.lesion;
  if (chosen.empty()) {
    rep.fallback = true;
    sp = build_slide_patches(record, image, provider.mask_for(record), cfg, model.encoder.input_side, true);
    chosen = sp.nonbackground();
    if (chosen.empty()) throw Error(ErrorKind::EmptySlide, "slide " + record.id + " is entirely background");
  }
  const auto out = iaam::iaam_forward(make_bag(sp, chosen, store, model), store, model.mil);
  rep.probs.assign(out.probs.data().begin(), out.probs.data().end());
  rep.predicted = argmax(rep.probs);
  rep.processed = chosen.size();
  rep.seconds = seconds_since(t0);
  return rep;
}

KvFile make_manifest(const RunConfig& cfg, const TrainLog& log, const numcore::ParamStore& store,
                     const std::string& dataset) {
  KvFile kv;
  kv.set("seed", std::to_string(cfg.train.seed));
  kv.set("dataset", dataset);
  const KvFile echo = cfg.echo();
  for (const auto& [k, v] : echo.entries()) kv.set("config." + k, v);
  kv.set_number("epochs_completed", log.epochs.size());
  for (std::size_t i = 0; i < log.epochs.size(); ++i) {
    const auto p = "epoch." + std::to_string(i);
    kv.set(p + ".loss", format_double(log.epochs[i].loss));
    kv.set(p + ".accuracy", format_double(log.epochs[i].accuracy));
    kv.set(p + ".seconds", format_double(log.epochs[i].seconds));
  }
  kv.set_number("steps", log.steps);
  kv.set("diverged", log.diverged ? "true" : "false");
  kv.set_number("last_good_step", log.last_good_step);
  if (log.diverged) kv.set("error", log.error);
  kv.set("wall_clock", format_double(log.seconds));
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(numcore::params_hash(store)));
  kv.set("params_hash", hash);
  return kv;
}

RunConfig config_from_manifest(const KvFile& manifest) {
  RunConfig cfg;
  for (const auto& [k, v] : manifest.entries())
    if (k.rfind("config.", 0) == 0) cfg.set(k.substr(7), v);
  return cfg;
}

}  // namespace msamil::pipeline

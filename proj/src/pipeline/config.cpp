#include "msamil/pipeline/config.hpp"

#include <charconv>
#include <sstream>

#include "msamil/errors.hpp"
#include "msamil/sffm/sffm.hpp"

namespace msamil::pipeline {

const char* to_string(PatchSource s) {
  switch (s) {
    case PatchSource::AllNonBackground: return "all_nonbackground";
    case PatchSource::LesionOnly: return "lesion_only";
    case PatchSource::RandomK: return "random_k";
  }
  return "?";
}

const char* to_string(Stage s) { return s == Stage::E2E ? "e2e" : "mil_only"; }
const char* to_string(MaskKind m) { return m == MaskKind::Oracle ? "oracle" : "file"; }

PatchSource parse_source(const std::string& s) {
  if (s == "all_nonbackground" || s == "all") return PatchSource::AllNonBackground;
  if (s == "lesion_only" || s == "lesion") return PatchSource::LesionOnly;
  if (s == "random_k" || s == "random") return PatchSource::RandomK;
  throw Error(ErrorKind::Config, "unknown patch source '" + s + "'");
}

Stage parse_stage(const std::string& s) {
  if (s == "e2e") return Stage::E2E;
  if (s == "mil_only") return Stage::MilOnly;
  throw Error(ErrorKind::Config, "unknown stage '" + s + "'");
}

MaskKind parse_mask(const std::string& s) {
  if (s == "oracle") return MaskKind::Oracle;
  if (s == "file") return MaskKind::File;
  throw Error(ErrorKind::Config, "unknown mask provider '" + s + "'");
}

void validate(const ModelConfig& cfg) {
  msfem::validate(cfg.encoder);
  iaam::validate(cfg.mil);
  if (cfg.encoder.token_dim != cfg.mil.dim) {
    throw Error(ErrorKind::Config, "encoder token dim " + std::to_string(cfg.encoder.token_dim) +
                                       " differs from mil dim " + std::to_string(cfg.mil.dim));
  }
}

void validate(const TrainConfig& cfg) {
  if (cfg.batch < 1) throw Error(ErrorKind::Config, "batch must be at least 1");
  if (cfg.accum_steps < 1) throw Error(ErrorKind::Config, "accum_steps must be at least 1");
  if (!(cfg.learning_rate >= 0) || !(cfg.stage2_learning_rate >= 0)) {
    throw Error(ErrorKind::Config, "learning rates must be non-negative");
  }
  if (!(cfg.theta > 0 && cfg.theta < 1)) throw Error(ErrorKind::Config, "theta must lie in (0, 1)");
  if (cfg.sides.empty()) throw Error(ErrorKind::Config, "at least one patch side is required");
  for (auto s : cfg.sides) {
    try {
      sffm::scale_code_for(s);
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, e.what());
    }
  }
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& s) {
  std::size_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::Config, key + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::Config, key + ": expected an unsigned integer, got '" + s + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::Config, key + ": expected a number, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true" || s == "on") return true;
  if (s == "0" || s == "false" || s == "off") return false;
  throw Error(ErrorKind::Config, key + ": expected a boolean, got '" + s + "'");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size("list", item));
  if (out.empty()) throw Error(ErrorKind::Config, "empty list");
  return out;
}

std::vector<std::string> RunConfig::keys() {
  return {"seed",          "lr",          "epochs",          "batch",         "accum_steps",  "stage",
          "source",        "quota_20x",   "quota_10x",       "quota_5x",      "scales",       "theta",
          "stage2_epochs", "stage2_lr",   "mask",            "workers",       "dim",          "enc.input_side",
          "enc.widths",    "enc.depth",   "enc.heads",       "enc.mlp_ratio", "mil.heads",    "mil.rank",
          "mil.layers",    "mil.queries", "mil.mlp_ratio",   "mil.residual",  "mil.index_encoding", "classes"};
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto& t = train;
  auto& e = model.encoder;
  auto& m = model.mil;
  if (key == "seed") {
    t.seed = parse_u64(key, value);
  } else if (key == "lr") {
    t.learning_rate = parse_real(key, value);
  } else if (key == "epochs") {
    t.epochs = parse_size(key, value);
  } else if (key == "batch") {
    t.batch = parse_size(key, value);
  } else if (key == "accum_steps") {
    t.accum_steps = parse_size(key, value);
  } else if (key == "stage") {
    t.stage = parse_stage(value);
  } else if (key == "source") {
    t.source = parse_source(value);
  } else if (key == "quota_20x") {
    t.quotas[0] = parse_size(key, value);
  } else if (key == "quota_10x") {
    t.quotas[1] = parse_size(key, value);
  } else if (key == "quota_5x") {
    t.quotas[2] = parse_size(key, value);
  } else if (key == "scales") {
    auto sides = parse_sizes(value);
    for (auto side : sides) {
      if (side != 512 && side != 1024 && side != 2048) {
        throw Error(ErrorKind::Config, "scales: patch side " + std::to_string(side) + " is not 512, 1024 or 2048");
      }
    }
    t.sides = std::move(sides);
  } else if (key == "theta") {
    t.theta = parse_real(key, value);
  } else if (key == "stage2_epochs") {
    t.stage2_epochs = parse_size(key, value);
  } else if (key == "stage2_lr") {
    t.stage2_learning_rate = parse_real(key, value);
  } else if (key == "mask") {
    mask = parse_mask(value);
  } else if (key == "workers") {
    workers = parse_size(key, value);
  } else if (key == "dim") {
    e.token_dim = m.dim = parse_size(key, value);
  } else if (key == "enc.input_side") {
    e.input_side = parse_size(key, value);
  } else if (key == "enc.widths") {
    e.widths = parse_sizes(value);
  } else if (key == "enc.depth") {
    e.depth = parse_size(key, value);
  } else if (key == "enc.heads") {
    e.heads = parse_size(key, value);
  } else if (key == "enc.mlp_ratio") {
    e.mlp_ratio = parse_size(key, value);
  } else if (key == "mil.heads") {
    m.heads = parse_size(key, value);
  } else if (key == "mil.rank") {
    m.rank = parse_size(key, value);
  } else if (key == "mil.layers") {
    m.layers = parse_size(key, value);
  } else if (key == "mil.queries") {
    m.queries = parse_size(key, value);
  } else if (key == "mil.mlp_ratio") {
    m.mlp_ratio = parse_size(key, value);
  } else if (key == "mil.residual") {
    m.residual = parse_bool(key, value);
  } else if (key == "mil.index_encoding") {
    m.index_encoding = parse_bool(key, value);
  } else if (key == "classes") {
    m.classes = parse_size(key, value);
  } else {
    throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
  }
}

void RunConfig::apply(const KvFile& kv) {
  for (const auto& [k, v] : kv.entries()) set(k, v);
}

KvFile RunConfig::echo() const {
  KvFile kv;
  const auto& t = train;
  const auto& e = model.encoder;
  const auto& m = model.mil;
  kv.set("seed", std::to_string(t.seed));
  kv.set("lr", format_double(t.learning_rate));
  kv.set_number("epochs", t.epochs);
  kv.set_number("batch", t.batch);
  kv.set_number("accum_steps", t.accum_steps);
  kv.set("stage", to_string(t.stage));
  kv.set("source", to_string(t.source));
  kv.set_number("quota_20x", t.quotas[0]);
  kv.set_number("quota_10x", t.quotas[1]);
  kv.set_number("quota_5x", t.quotas[2]);
  kv.set("scales", join_sizes(t.sides));
  kv.set("theta", format_double(t.theta));
  kv.set_number("stage2_epochs", t.stage2_epochs);
  kv.set("stage2_lr", format_double(t.stage2_learning_rate));
  kv.set("mask", to_string(mask));
  kv.set_number("workers", workers);
  kv.set_number("dim", e.token_dim);
  kv.set_number("enc.input_side", e.input_side);
  kv.set("enc.widths", join_sizes(e.widths));
  kv.set_number("enc.depth", e.depth);
  kv.set_number("enc.heads", e.heads);
  kv.set_number("enc.mlp_ratio", e.mlp_ratio);
  kv.set_number("mil.heads", m.heads);
  kv.set_number("mil.rank", m.rank);
  kv.set_number("mil.layers", m.layers);
  kv.set_number("mil.queries", m.queries);
  kv.set_number("mil.mlp_ratio", m.mlp_ratio);
  kv.set("mil.residual", bool_str(m.residual));
  kv.set("mil.index_encoding", bool_str(m.index_encoding));
  kv.set_number("classes", m.classes);
  return kv;
}

}  // namespace msamil::pipeline

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "msamil/iaam/iaam.hpp"
#include "msamil/kvfile.hpp"
#include "msamil/msfem/encoder.hpp"

namespace msamil::pipeline {

enum class PatchSource { AllNonBackground, LesionOnly, RandomK };
enum class Stage { E2E, MilOnly };
enum class MaskKind { Oracle, File };

const char* to_string(PatchSource s);
const char* to_string(Stage s);
const char* to_string(MaskKind m);
PatchSource parse_source(const std::string& s);
Stage parse_stage(const std::string& s);
MaskKind parse_mask(const std::string& s);

struct ModelConfig {
  msfem::EncoderConfig encoder;
  iaam::IaamConfig mil;
};

// Checks both halves and that the encoder token width matches the MIL width.
void validate(const ModelConfig& cfg);

struct TrainConfig {
  std::size_t batch = 64;                           // B, instances per graph
  double learning_rate = 0.0005;
  std::size_t epochs = 40;
  std::size_t accum_steps = 1;
  std::uint64_t seed = 1;
  Stage stage = Stage::E2E;
  PatchSource source = PatchSource::LesionOnly;
  std::array<std::size_t, 3> quotas = {46, 11, 3};  // random_k per-scale counts
  std::vector<std::size_t> sides = {512, 1024, 2048};
  double theta = 0.7;
  std::size_t stage2_epochs = 20;
  double stage2_learning_rate = 0.02;
};

void validate(const TrainConfig& cfg);

/// Everything a command needs to reproduce a run. Keys are flat
/// ("lr", "enc.widths", "mil.rank", ...); unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  MaskKind mask = MaskKind::Oracle;
  std::size_t workers = 1;

  void set(const std::string& key, const std::string& value);  // throws Config
  void apply(const KvFile& kv);
  KvFile echo() const;
  static std::vector<std::string> keys();
};

std::string join_sizes(const std::vector<std::size_t>& v);
std::vector<std::size_t> parse_sizes(const std::string& s);

}  // namespace msamil::pipeline

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "msamil/synthwsi/generator.hpp"

namespace msamil::synth {

struct SlideRecord {
  std::string id;
  std::size_t label = 0;
  std::uint64_t seed = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  double single_scale_cap = 1.0;
  double lesion_fraction = 0.0;
};

struct SlideData {
  PyramidImage image;
  LesionMask mask;
};

class SlideSource {
 public:
  virtual ~SlideSource() = default;
  virtual SlideData load(const SlideRecord& record) const = 0;
};

// Regenerates slides from the spec on demand.
class SyntheticSource final : public SlideSource {
 public:
  explicit SyntheticSource(SynthSpec spec) : spec_(std::move(spec)) {}
  SlideData load(const SlideRecord& record) const override;

 private:
  SynthSpec spec_;
};

// Reads <root>/slide_<id>/image.ppm and mask.ppm.
class DirectorySource final : public SlideSource {
 public:
  explicit DirectorySource(std::filesystem::path root) : root_(std::move(root)) {}
  SlideData load(const SlideRecord& record) const override;

 private:
  std::filesystem::path root_;
};

struct Dataset {
  SynthSpec spec;
  std::uint64_t seed = 0;
  std::vector<SlideRecord> slides;
  std::shared_ptr<const SlideSource> source;

  Dataset subset(const std::vector<std::size_t>& indices) const;
};

std::filesystem::path slide_dir(const std::filesystem::path& root, const std::string& id);

/// Slides are generated in class-balanced groups: slide i has label i mod C and
/// the layout/noise seed of group i / C, so the slides of one group differ only
/// in their planted class signal.
Dataset make_synthetic_dataset(const SynthSpec& spec, std::size_t slides, std::uint64_t seed);

// Writes slide_<id>/{image.ppm, mask.ppm, meta.txt} plus dataset.txt at the root.
void write_dataset(const Dataset& dataset, const std::filesystem::path& root);
Dataset open_dataset(const std::filesystem::path& root);

}  // namespace msamil::synth

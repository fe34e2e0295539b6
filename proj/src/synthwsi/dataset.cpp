#include "msamil/synthwsi/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "msamil/errors.hpp"
#include "msamil/kvfile.hpp"
#include "msamil/rng.hpp"

namespace fs = std::filesystem;

namespace msamil::synth {

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::Parse, "bad integer list: " + s);
    }
  }
  return out;
}

}  // namespace

SlideData SyntheticSource::load(const SlideRecord& record) const {
  auto slide = generate_wsi(spec_, record.label, record.seed);
  return SlideData{std::move(slide.image), std::move(slide.mask)};
}

SlideData DirectorySource::load(const SlideRecord& record) const {
  const auto dir = slide_dir(root_, record.id);
  if (!fs::exists(dir / "image.ppm")) throw Error(ErrorKind::MissingInput, "missing slide image " + (dir / "image.ppm").string());
  LesionMask mask;
  mask.raster = read_ppm(dir / "mask.ppm");
  mask.provenance = LesionMask::Provenance::File;
  validate_mask(mask);
  return SlideData{PyramidImage(read_ppm(dir / "image.ppm")), std::move(mask)};
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out{spec, seed, {}, source};
  for (auto i : indices) out.slides.push_back(slides.at(i));
  return out;
}

fs::path slide_dir(const fs::path& root, const std::string& id) { return root / ("slide_" + id); }

Dataset make_synthetic_dataset(const SynthSpec& spec, std::size_t slides, std::uint64_t seed) {
  validate(spec);
  Dataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.source = std::make_shared<SyntheticSource>(spec);
  const double cap = single_scale_cap(spec);
  for (std::size_t i = 0; i < slides; ++i) {
    SlideRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "%04zu", i);
    r.id = id;
    r.label = i % spec.classes;
    r.seed = mix_seed(seed, i / spec.classes);
    r.width = spec.width;
    r.height = spec.height;
    r.single_scale_cap = cap;
    r.lesion_fraction = make_layout(spec, r.seed).planned_fraction();
    ds.slides.push_back(r);
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + root.string() + ": " + ec.message());

  KvFile top;
  top.set_number("classes", dataset.spec.classes);
  top.set("micro", join_ints(dataset.spec.micro));
  top.set("macro", join_ints(dataset.spec.macro));
  top.set_number("texture_period", dataset.spec.texture_period);
  top.set_number("texture_amplitude", dataset.spec.texture_amplitude);
  top.set_number("lesion_fraction", dataset.spec.lesion_fraction);
  top.set_number("noise", dataset.spec.noise);
  top.set_number("width", dataset.spec.width);
  top.set_number("height", dataset.spec.height);
  top.set_number("seed", dataset.seed);
  top.set_number("slides", dataset.slides.size());
  top.set_number("single_scale_cap", single_scale_cap(dataset.spec));
  top.write(root / "dataset.txt");

  for (const auto& r : dataset.slides) {
    const auto dir = slide_dir(root, r.id);
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
    const SlideData data = dataset.source->load(r);
    write_ppm(data.image.base(), dir / "image.ppm");
    write_ppm(data.mask.raster, dir / "mask.ppm");
    KvFile meta;
    meta.set_number("label", r.label);
    meta.set_number("W", r.width);
    meta.set_number("H", r.height);
    meta.set_number("seed", r.seed);
    meta.set_number("single_scale_cap", r.single_scale_cap);
    meta.set_number("lesion_fraction", data.mask.red_fraction());
    meta.write(dir / "meta.txt");
  }
}

Dataset open_dataset(const fs::path& root) {
  if (!fs::exists(root / "dataset.txt")) throw Error(ErrorKind::MissingInput, "no dataset at " + root.string());
  const auto top = KvFile::read(root / "dataset.txt");
  Dataset ds;
  ds.spec.classes = static_cast<std::size_t>(top.get_int("classes"));
  ds.spec.micro = split_ints(top.get("micro"));
  ds.spec.macro = split_ints(top.get("macro"));
  ds.spec.texture_period = static_cast<std::size_t>(top.get_int("texture_period"));
  ds.spec.texture_amplitude = static_cast<int>(top.get_int("texture_amplitude"));
  ds.spec.lesion_fraction = top.get_double("lesion_fraction");
  ds.spec.noise = static_cast<int>(top.get_int("noise"));
  ds.spec.width = static_cast<std::size_t>(top.get_int("width"));
  ds.spec.height = static_cast<std::size_t>(top.get_int("height"));
  ds.seed = static_cast<std::uint64_t>(std::stoull(top.get("seed")));
  ds.source = std::make_shared<DirectorySource>(root);

  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("slide_", 0) == 0) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const auto meta = KvFile::read(dir / "meta.txt");
    SlideRecord r;
    r.id = dir.filename().string().substr(6);
    r.label = static_cast<std::size_t>(meta.get_int("label"));
    r.width = static_cast<std::size_t>(meta.get_int("W"));
    r.height = static_cast<std::size_t>(meta.get_int("H"));
    r.seed = static_cast<std::uint64_t>(std::stoull(meta.get("seed")));
    r.single_scale_cap = meta.get_double("single_scale_cap");
    r.lesion_fraction = meta.get_double("lesion_fraction");
    ds.slides.push_back(r);
  }
  return ds;
}

}  // namespace msamil::synth

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pidd/complex_image.hpp"
#include "pidd/kv_config.hpp"
#include "pidd/rng.hpp"

namespace pidd {

struct PhantomSpec {
  std::size_t size = 64;
  std::size_t ellipses_min = 4;
  std::size_t ellipses_max = 10;
  double intensity_min = 0.1;
  double intensity_max = 1.0;
  std::size_t coils = 4;
  std::uint64_t seed = 1;

  void validate() const;
  KeyValues to_kv() const;
  static PhantomSpec from_kv(const KeyValues& kv);
};

struct Phantom {
  ComplexImage truth;
  CoilImages coil_images;
  SensitivityMaps maps;
};

/// Pixels inside the disc of radius 0.47 * size about the image center.
std::vector<std::uint8_t> support_disc(std::size_t h, std::size_t w);

/// Head-like ellipse phantom with a smooth phase ramp, magnitude in [0, 1]
/// (maximum exactly 1), and Q Gaussian-lobed coil profiles on a ring,
/// sum-of-squares normalized on the support disc and zero outside it.
Phantom gen_phantom(const PhantomSpec& spec, RngStream& rng);

/// C = 1 everywhere, Q = 1.
SensitivityMaps trivial_maps(std::size_t h, std::size_t w);

struct ManifestEntry {
  std::string split;  // train | val | test
  std::filesystem::path image;
  std::filesystem::path maps;  // empty when absent
};

/// `split<TAB>image<TAB>maps` lines, paths relative to the manifest directory.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& tag) const;
  void write(const std::filesystem::path& file) const;
  static DatasetManifest read(const std::filesystem::path& file);
};

inline constexpr const char* kManifestName = "manifest.tsv";

/// Writes `count` phantoms (sample i drawn from stream id i of spec.seed) as
/// sNNNN.img.pidt / sNNNN.maps.pidt plus manifest.tsv and phantom.cfg.
/// Splits follow `ratios` (train:val:test) over a seeded permutation.
DatasetManifest build_dataset(const PhantomSpec& spec, std::size_t count, std::array<double, 3> ratios,
                              const std::filesystem::path& out_dir);

enum class Layout {
  manifest,  // directory holding manifest.tsv
  images     // directory of complex or real image containers, no maps
};

struct LoadedSample {
  std::string id;
  std::string split;
  ComplexImage image;
  SensitivityMaps maps;
  bool synthesized_maps = false;
};

/// Images-only directories get Q = 1 trivial maps and are all tagged `test`.
std::vector<LoadedSample> load_external(const std::filesystem::path& path, Layout layout);

}  // namespace pidd

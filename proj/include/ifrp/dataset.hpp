#ifndef IFRP_DATASET_HPP
#define IFRP_DATASET_HPP

#include "ifrp/image.hpp"
#include "ifrp/stn/sampler.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace ifrp {

inline constexpr int kManifestVersion = 1;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Range {
  double lo = 0;
  double hi = 0;
  bool operator==(const Range&) const = default;
};

struct MisalignmentRanges {
  Range rotation_deg{-45.0, 45.0};
  Range scale{0.7, 1.3};
  Range translation_frac{-0.1, 0.1};  // fraction of the image width

  void validate() const;
  static MisalignmentRanges none() { return {{0, 0}, {1, 1}, {0, 0}}; }
  bool operator==(const MisalignmentRanges&) const = default;
};

// Largest centered square, bilinearly resized to target x target.
Image center_crop_resize(const Image& image, Index target);

// 64-bit stream for one (seed, index) pair.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

// One uniform draw per component. tx/ty are in normalized [-1,1] coordinates,
// i.e. twice the sampled fraction of the width.
TransformParams sample_misalignment(std::uint64_t rng_seed, const MisalignmentRanges& ranges);

// Warps about the image center so that the content itself undergoes p:
// scale 0.7 shrinks the face to 0.7x its extent, rotation turns it by p.rotation.
// Normalized coordinates span [-1,1] on each axis.
Image apply_affine(const Image& image, const TransformParams& p);

// Deterministic image -> image filter.
class Stylizer {
 public:
  virtual ~Stylizer() = default;
  virtual std::string id() const = 0;
  virtual Image apply(const Image& rgb) const = 0;
};

// Posterized luma with dark edge strokes.
class SketchStylizer final : public Stylizer {
 public:
  explicit SketchStylizer(int levels = 4) : levels_(levels) {}
  std::string id() const override { return "sketch"; }
  Image apply(const Image& rgb) const override;

 private:
  int levels_;
};

// Luma remapped through a saturated palette.
class CandyStylizer final : public Stylizer {
 public:
  std::string id() const override { return "candy"; }
  Image apply(const Image& rgb) const override;
};

// Flat-colored tiles separated by dark grout.
class MosaicStylizer final : public Stylizer {
 public:
  explicit MosaicStylizer(Index tiles = 12) : tiles_(tiles) {}
  std::string id() const override { return "mosaic"; }
  Image apply(const Image& rgb) const override;

 private:
  Index tiles_;
};

std::unique_ptr<Stylizer> make_stylizer(const std::string& id);
std::vector<std::string> builtin_stylizers();

// Synthetic aligned portrait (CelebA-sized by default) for identity `seed`.
Image render_face(std::uint64_t seed, Index width = 178, Index height = 218);

struct FacePairRecord {
  std::string id;        // "{identity}_{style}"
  std::string identity;  // source face id shared by all styles
  std::string source;    // source file name
  std::string rf_path;  // relative to the dataset root
  std::string sf_path;
  std::string style;
  std::string split;  // "train" or "test"
  TransformParams misalignment;
  bool operator==(const FacePairRecord&) const = default;
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::uint64_t seed = 0;
  Index image_size = 0;
  std::vector<std::string> styles;
  MisalignmentRanges ranges;
  std::vector<FacePairRecord> records;
  std::map<std::string, Index> split_counts;
  std::filesystem::path root;  // directory the relative paths resolve against; not serialized

  std::vector<const FacePairRecord*> split(const std::string& name) const;
  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
};

struct SplitSpec {
  double test_fraction = 0.25;  // of source identities
};

struct SynthesisOptions {
  Index image_size = 32;
  std::uint64_t seed = 0;
  MisalignmentRanges ranges;
  SplitSpec split;
};

DatasetManifest synthesize_pairs(const std::filesystem::path& source_dir,
                                 const std::vector<const Stylizer*>& stylizers,
                                 const std::filesystem::path& out_dir, const SynthesisOptions& options);

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Writes `count` rendered faces as face_NNN.png into dir.
void write_synthetic_faces(const std::filesystem::path& dir, Index count, std::uint64_t seed);

}  // namespace ifrp

#endif  // IFRP_DATASET_HPP

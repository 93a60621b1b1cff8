#pragma once

// Volume container, format version 1. All integers little-endian.
//
//   magic    4 bytes  "VXVL"
//   version  u32
//   dims     3 x u32  (h, w, d)
//   spacing  3 x f64  (mm)
//   dtype    u8       0 = f32 intensities, 1 = u8 labels
//   voxels   h*w*d elements, d fastest

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxadv/config.hpp"
#include "voxadv/rng.hpp"
#include "voxadv/types.hpp"

namespace voxadv {

inline constexpr std::uint32_t kVolumeFormatVersion = 1;

void write_volume(const std::filesystem::path& path, const Volume& v);
Volume read_volume(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const LabelMask& m, const Spacing& spacing = {});
/// Labels are checked against num_classes.
LabelMask read_mask(const std::filesystem::path& path, int num_classes);

enum class Split { train, labeled, unlabeled, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct CaseEntry {
    std::string id;
    std::string volume;                // relative to the manifest directory
    std::optional<std::string> mask;   // absent for cases that never had a label
    Split split = Split::train;
    friend bool operator==(const CaseEntry&, const CaseEntry&) = default;
};

struct DatasetManifest {
    int num_classes = 2;
    Extent3 extent{};
    std::optional<std::uint64_t> generation_seed;
    std::optional<double> labeled_fraction;
    std::optional<std::uint64_t> split_seed;
    std::vector<CaseEntry> cases;
    std::filesystem::path root;  // directory holding the manifest; not serialised

    [[nodiscard]] std::vector<const CaseEntry*> with_split(Split s) const;
    [[nodiscard]] std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
    /// Throws DomainError on duplicate ids or labeled cases without masks.
    void validate() const;
    friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
        return a.num_classes == b.num_classes && a.extent == b.extent && a.generation_seed == b.generation_seed &&
               a.labeled_fraction == b.labeled_fraction && a.split_seed == b.split_seed && a.cases == b.cases;
    }
};

inline constexpr const char* kManifestName = "manifest.json";

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Appearance of the synthetic phantoms.
struct SyntheticParams {
    double background_mean = 0.3;
    double contrast_low = 0.06;     // class k mean = background + offset + k * contrast,
    double contrast_high = 0.22;    // contrast drawn per case from [low, high]
    double noise_sigma = 0.1;
    double case_offset = 0.05;      // per-case uniform intensity shift half-width
    double radius_low = 0.19;       // ellipsoid semi-axes as fractions of the extent,
    double radius_high = 0.33;      // scaled by (K-1)^(-1/3)
    double edge_sharpness = 6.0;
};

struct SyntheticCase {
    Volume volume;
    LabelMask mask;
};

/// One phantom: K-1 soft-edged ellipsoids (one per foreground class, distinct
/// centres) over a noisy background. Deterministic in (seed, case_index).
SyntheticCase generate_case(std::uint64_t seed, int case_index, int size, int num_classes, const SyntheticParams& p = {});

/// Writes n_train + n_test cases and a manifest into `dir`. Train cases are
/// marked `train` until make_split assigns labeled/unlabeled.
DatasetManifest generate_synthetic(const std::filesystem::path& dir, std::uint64_t seed, int n_train, int n_test, int size,
                                   int num_classes, const SyntheticParams& p = {});

/// Synthetic: identity. LA: standardise then min-max to [0,1]. MO: clip to
/// [-200, 250] HU, trilinear resample to 128x128x64, standardise, min-max.
/// A constant volume normalises to 0.5. Throws DomainError with the count of
/// non-finite voxels.
Volume preprocess(const Volume& v, Preset preset);

/// Standardise, then map min..max onto [0,1]; constant input maps to 0.5.
Volume normalize_unit_range(const Volume& v);
Volume resample_trilinear(const Volume& v, const Extent3& target);
LabelMask resample_nearest(const LabelMask& m, const Extent3& target);

/// Deterministic shuffle of all non-test cases; the first
/// ceil(fraction * n) (or `labeled_count` when given) become labeled.
DatasetManifest make_split(const DatasetManifest& m, double labeled_fraction, std::uint64_t seed,
                           std::optional<int> labeled_count = std::nullopt);

/// Random crop to `patch` plus optional per-axis flips, applied identically to
/// the volume and (when present) its mask.
struct Patch {
    Volume volume;
    std::optional<LabelMask> mask;
};
Patch augment_patch(const Volume& v, const LabelMask* mask, const Extent3& patch, bool flip, Rng& rng);

}  // namespace voxadv

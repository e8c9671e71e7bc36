#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "morphwin/tensor.hpp"
#include "morphwin/volume.hpp"

namespace morphwin {

struct PhantomSpec {
    std::uint64_t seed = 0;
    Dims3 dims{48, 32, 16};
    Spacing spacing{1.0, 1.0, 1.0};

    std::size_t organs = 6;
    double radius_min = 2.5;  // ellipsoid semi-axes, voxels
    double radius_max = 4.5;
    double edge_softness = 0.75;  // voxels
    double intensity_min = 0.45;
    double intensity_max = 0.95;
    double background = 0.15;
    double texture = 0.2;             // amplitude of the smooth background texture
    std::size_t texture_spacing = 4;  // voxels between texture control points

    double amplitude = 1.9;            // max displacement norm, voxels
    std::size_t control_spacing = 16;  // voxels between deformation control points
    double coherence = 0.6;            // weight of the displacement shared by all control points
};

/// Throws ValidationError when the deformation amplitude is not below the
/// smallest window extent.
void check_registrable(const PhantomSpec& spec, const Dims3& window);

/// Ellipsoidal organs (labels 1..organs) with soft edges and distinct
/// intensities on a smoothly textured background, all within [0, 1].
/// Later organs never overwrite earlier ones. Deterministic per seed.
LabeledVolume generate_phantom(const PhantomSpec& spec);

/// Random control-grid displacements upsampled trilinearly and scaled so
/// the largest displacement norm equals spec.amplitude. [D,H,W,3]. Each
/// control vector blends one shared random unit vector (weight coherence)
/// with its own random direction of norm in [0.5, 1].
Tensor<float> random_smooth_field(const PhantomSpec& spec);

struct RegistrationPair {
    LabeledVolume moving;
    LabeledVolume fixed;
    Tensor<float> ground_truth;  // fixed warped by this field gives moving
    std::vector<std::string> warnings;
};

RegistrationPair make_pair(const PhantomSpec& spec);

// ---- MWVOL1 ----------------------------------------------------------
// magic "MWVOL1", version u32 (1), dims u64 x3, spacing f64 x3, flags u32
// (bit 0: labels follow, bit 1: data is a 3-channel field), then
// little-endian f32 values (1 or 3 per voxel), then optional u16 labels.

struct VolumeFile {
    Tensor<float> data;  // [D,H,W,1] or [D,H,W,3]
    std::optional<LabelMap> labels;
    Spacing spacing{1.0, 1.0, 1.0};

    bool is_field() const { return data.rank() == 4 && data.dim(3) == 3; }
};

void write_volume(std::ostream& os, const VolumeFile& v);
VolumeFile read_volume(std::istream& is);
void save_volume(const std::string& path, const VolumeFile& v);
VolumeFile load_volume(const std::string& path);

void save_labeled(const std::string& path, const LabeledVolume& v);
LabeledVolume load_labeled(const std::string& path);
void save_field(const std::string& path, const Tensor<float>& phi, const Spacing& spacing = {1, 1, 1});
Tensor<float> load_field(const std::string& path);

}  // namespace morphwin

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mapcon/mesh.hpp"

namespace mapcon {

// Shape factor of a synthetic subject: per-segment lengths and radii of an
// articulated tube.
struct IdentitySpec {
    std::vector<double> lengths; // J segments
    std::vector<double> radii;   // J segments
    std::string id;
};

// Articulation factor: bend angle at each of the J-1 joints, radians.
struct PoseSpec {
    std::vector<double> angles;
    std::string id;
};

// Sweeps circles along a planar kinematic chain. Vertex count and topology
// are fixed by (J, rings, sides): N = J * rings * sides + 2 cap vertices, in
// a canonical order shared by every (identity, pose) pair. Pose deformation
// is rigid per segment, so make_mesh(id_B, pose_1) is the exact ground truth
// for transferring pose_1 onto identity B.
Mesh make_mesh(const IdentitySpec& id, const PoseSpec& pose, size_t rings, size_t sides);

struct ManifestEntry {
    std::string identity_id;
    std::string pose_id;
    bool labelled = true;
    std::string relative_path;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::string root_dir;

    std::vector<ManifestEntry> labelled() const;
    std::vector<ManifestEntry> unlabelled() const;
};

struct DatasetConfig {
    size_t n_ids = 4;
    size_t n_poses = 8;
    uint64_t seed = 1;
    double labelled_split = 1.0; // fraction of identities and poses kept labelled
    size_t segments = 5;
    size_t rings = 6;
    size_t sides = 10;
    double noise = 0.0; // uniform vertex perturbation amplitude
};

// Samples identities and poses from seeded uniform ranges, writes one OBJ per
// manifest entry plus the manifest file. The labelled split keeps a fraction
// of identities and poses jointly; unlabelled meshes come from the removed
// identities crossed with the removed poses.
DatasetManifest make_dataset(const DatasetConfig& cfg, const std::string& out_dir);

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

} // namespace mapcon

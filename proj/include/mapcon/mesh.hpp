#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <string>
#include <vector>

namespace mapcon {

struct MeshError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Triangle mesh treated as a point cloud by the model; connectivity is kept
// for the edge loss. Vertices are row-major N x 3, single precision.
struct Mesh {
    std::vector<float> vertices;                    // 3 * N
    std::vector<std::array<uint32_t, 3>> faces;     // optional
    std::vector<std::pair<uint32_t, uint32_t>> edges; // unordered pairs, i < j, sorted unique
    std::string name;

    size_t vertex_count() const { return vertices.size() / 3; }
    const float* vertex(size_t i) const { return vertices.data() + 3 * i; }
    float* vertex(size_t i) { return vertices.data() + 3 * i; }
};

struct Permutation {
    std::vector<uint32_t> mapping; // old index -> new index
    uint64_t seed = 0;
};

// Unique undirected edges from the face list, i < j, sorted.
std::vector<std::pair<uint32_t, uint32_t>> edges_from_faces(
    const std::vector<std::array<uint32_t, 3>>& faces, size_t vertex_count);

// ASCII OBJ (v/f) or ASCII PLY, decided by file extension / header.
Mesh load_mesh(const std::string& path);

enum class MeshFormat { Obj, Ply };
void save_mesh(const Mesh& mesh, const std::string& path, MeshFormat format);

// Uniform random permutation of vertex order (Fisher-Yates over xoshiro256**);
// faces and edges are remapped consistently.
std::pair<Mesh, Permutation> random_reorder(const Mesh& mesh, uint64_t seed);

// Applies a given permutation (old index -> new index). Used to keep a ground
// truth mesh aligned with its reordered identity input.
Mesh apply_permutation(const Mesh& mesh, const Permutation& perm);

// Translates vertices so the bounding box is centered on the origin.
Mesh zero_center(const Mesh& mesh);

// Reorder with the given seed, then zero-center. Fixed preprocessing order
// for both training and evaluation.
std::pair<Mesh, Permutation> preprocess(const Mesh& mesh, uint64_t seed);

} // namespace mapcon

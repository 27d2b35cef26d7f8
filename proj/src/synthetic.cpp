#include "mapcon/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mapcon/rng.hpp"

namespace mapcon {

namespace {

constexpr double kMinSize = 0.02;
constexpr double kMaxAngle = 1.5707963267948966; // pi/2
constexpr double kMinEdge = 1e-4;

void validate_specs(const IdentitySpec& id, const PoseSpec& pose, size_t rings, size_t sides) {
    const size_t j = id.lengths.size();
    if (j < 2) throw MeshError("make_mesh: need at least 2 segments");
    if (id.radii.size() != j) throw MeshError("make_mesh: lengths/radii count mismatch");
    if (pose.angles.size() != j - 1)
        throw MeshError("make_mesh: expected " + std::to_string(j - 1) + " joint angles, got " +
                        std::to_string(pose.angles.size()));
    if (rings < 2) throw MeshError("make_mesh: need at least 2 rings per segment");
    if (sides < 3) throw MeshError("make_mesh: need at least 3 sides");
    for (double l : id.lengths)
        if (l <= kMinSize) throw MeshError("make_mesh: segment length must exceed 0.02");
    for (double r : id.radii)
        if (r <= kMinSize) throw MeshError("make_mesh: segment radius must exceed 0.02");
    for (double a : pose.angles)
        if (std::abs(a) > kMaxAngle) throw MeshError("make_mesh: joint angle outside [-pi/2, pi/2]");
}

} // namespace

Mesh make_mesh(const IdentitySpec& id, const PoseSpec& pose, size_t rings, size_t sides) {
    validate_specs(id, pose, rings, sides);
    const size_t j_segs = id.lengths.size();
    const size_t n_rings = j_segs * rings;
    const size_t n = n_rings * sides + 2;

    Mesh mesh;
    mesh.name = id.id + "_" + pose.id;
    mesh.vertices.resize(n * 3);

    // planar chain in the xz plane; ring circles live in planes normal to the
    // local segment direction
    double px = 0.0, pz = 0.0, phi = 0.0;
    double end_x = 0.0, end_z = 0.0;
    size_t ring = 0;
    for (size_t s = 0; s < j_segs; ++s) {
        if (s > 0) phi += pose.angles[s - 1];
        const double dirx = std::sin(phi), dirz = std::cos(phi);
        const double vx = -dirz, vz = dirx; // dir x (0,1,0)
        const double len = id.lengths[s], rad = id.radii[s];
        for (size_t k = 0; k < rings; ++k, ++ring) {
            const double t = (static_cast<double>(k) + 0.5) / static_cast<double>(rings);
            const double cx = px + t * len * dirx;
            const double cz = pz + t * len * dirz;
            for (size_t q = 0; q < sides; ++q) {
                const double ang = 2.0 * M_PI * static_cast<double>(q) / static_cast<double>(sides);
                const double cu = rad * std::cos(ang); // along +y
                const double cv = rad * std::sin(ang); // along v
                float* out = mesh.vertex(ring * sides + q);
                out[0] = static_cast<float>(cx + cv * vx);
                out[1] = static_cast<float>(cu);
                out[2] = static_cast<float>(cz + cv * vz);
            }
        }
        px += len * dirx;
        pz += len * dirz;
        end_x = px;
        end_z = pz;
    }
    float* cap0 = mesh.vertex(n - 2);
    cap0[0] = 0.0f;
    cap0[1] = 0.0f;
    cap0[2] = 0.0f;
    float* cap1 = mesh.vertex(n - 1);
    cap1[0] = static_cast<float>(end_x);
    cap1[1] = 0.0f;
    cap1[2] = static_cast<float>(end_z);

    auto vid = [sides](size_t g, size_t q) {
        return static_cast<uint32_t>(g * sides + q % sides);
    };
    for (size_t g = 0; g + 1 < n_rings; ++g)
        for (size_t q = 0; q < sides; ++q) {
            const uint32_t a = vid(g, q), b = vid(g, q + 1);
            const uint32_t c = vid(g + 1, q + 1), d = vid(g + 1, q);
            mesh.faces.push_back({a, b, c});
            mesh.faces.push_back({a, c, d});
        }
    const uint32_t start_cap = static_cast<uint32_t>(n - 2);
    const uint32_t end_cap = static_cast<uint32_t>(n - 1);
    for (size_t q = 0; q < sides; ++q) {
        mesh.faces.push_back({start_cap, vid(0, q + 1), vid(0, q)});
        mesh.faces.push_back({end_cap, vid(n_rings - 1, q), vid(n_rings - 1, q + 1)});
    }
    mesh.edges = edges_from_faces(mesh.faces, n);

    for (const auto& [a, b] : mesh.edges) {
        const float* va = mesh.vertex(a);
        const float* vb = mesh.vertex(b);
        double d2 = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double d = static_cast<double>(va[k]) - vb[k];
            d2 += d * d;
        }
        if (d2 < kMinEdge * kMinEdge)
            throw MeshError("make_mesh: degenerate edge of length " + std::to_string(std::sqrt(d2)));
    }
    return mesh;
}

std::vector<ManifestEntry> DatasetManifest::labelled() const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.labelled) out.push_back(e);
    return out;
}

std::vector<ManifestEntry> DatasetManifest::unlabelled() const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (!e.labelled) out.push_back(e);
    return out;
}

DatasetManifest make_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
    if (cfg.n_ids < 2 || cfg.n_poses < 2)
        throw MeshError("make_dataset: need at least 2 identities and 2 poses");
    if (cfg.labelled_split < 0.0 || cfg.labelled_split > 1.0)
        throw MeshError("make_dataset: split must lie in [0, 1]");
    std::filesystem::create_directories(out_dir);

    Xoshiro256ss id_rng(mix_seed(cfg.seed, 0x1d));
    Xoshiro256ss pose_rng(mix_seed(cfg.seed, 0x9e));
    Xoshiro256ss noise_rng(mix_seed(cfg.seed, 0x7e));

    std::vector<IdentitySpec> ids(cfg.n_ids);
    for (size_t i = 0; i < cfg.n_ids; ++i) {
        ids[i].id = "id" + std::to_string(i);
        ids[i].lengths.resize(cfg.segments);
        ids[i].radii.resize(cfg.segments);
        for (size_t s = 0; s < cfg.segments; ++s) {
            ids[i].lengths[s] = id_rng.uniform(0.15, 1.5);
            ids[i].radii[s] = id_rng.uniform(0.03, 0.60);
        }
    }
    std::vector<PoseSpec> poses(cfg.n_poses);
    for (size_t p = 0; p < cfg.n_poses; ++p) {
        poses[p].id = "pose" + std::to_string(p);
        poses[p].angles.resize(cfg.segments - 1);
        for (auto& a : poses[p].angles) a = pose_rng.uniform(-0.7, 0.7);
    }

    // the labelled split keeps the first k entries of a seeded shuffle
    auto shuffled = [&](size_t count, uint64_t salt) {
        std::vector<size_t> order(count);
        std::iota(order.begin(), order.end(), size_t{0});
        Xoshiro256ss rng(mix_seed(cfg.seed, salt));
        for (size_t i = count - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
        return order;
    };
    const size_t kept_ids = static_cast<size_t>(std::lround(cfg.labelled_split * cfg.n_ids));
    const size_t kept_poses = static_cast<size_t>(std::lround(cfg.labelled_split * cfg.n_poses));
    const auto id_order = shuffled(cfg.n_ids, 0x51);
    const auto pose_order = shuffled(cfg.n_poses, 0x52);

    DatasetManifest manifest;
    manifest.root_dir = out_dir;
    auto emit = [&](size_t i, size_t p, bool labelled) {
        Mesh mesh = make_mesh(ids[i], poses[p], cfg.rings, cfg.sides);
        if (cfg.noise > 0.0)
            for (auto& v : mesh.vertices)
                v += static_cast<float>(noise_rng.uniform(-cfg.noise, cfg.noise));
        const std::string rel = ids[i].id + "_" + poses[p].id + ".obj";
        save_mesh(mesh, out_dir + "/" + rel, MeshFormat::Obj);
        manifest.entries.push_back({ids[i].id, poses[p].id, labelled, rel});
    };
    for (size_t ii = 0; ii < kept_ids; ++ii)
        for (size_t pp = 0; pp < kept_poses; ++pp) emit(id_order[ii], pose_order[pp], true);
    for (size_t ii = kept_ids; ii < cfg.n_ids; ++ii)
        for (size_t pp = kept_poses; pp < cfg.n_poses; ++pp) emit(id_order[ii], pose_order[pp], false);

    save_manifest(manifest, out_dir + "/manifest.txt");
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MeshError("cannot write " + path);
    for (const auto& e : manifest.entries)
        out << e.identity_id << "," << e.pose_id << "," << (e.labelled ? 1 : 0) << ","
            << e.relative_path << "\n";
    if (!out) throw MeshError("write failure on " + path);
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MeshError("cannot open " + path);
    DatasetManifest manifest;
    manifest.root_dir = std::filesystem::path(path).parent_path().string();
    if (manifest.root_dir.empty()) manifest.root_dir = ".";
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestEntry e;
        std::string labelled;
        if (!std::getline(ls, e.identity_id, ',') || !std::getline(ls, e.pose_id, ',') ||
            !std::getline(ls, labelled, ',') || !std::getline(ls, e.relative_path))
            throw MeshError(path + ":" + std::to_string(line_no) + ": malformed manifest row");
        e.labelled = labelled == "1";
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

} // namespace mapcon

#include "mapcon/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mapcon/rng.hpp"

namespace mapcon {

std::vector<std::pair<uint32_t, uint32_t>> edges_from_faces(
    const std::vector<std::array<uint32_t, 3>>& faces, size_t vertex_count) {
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    edges.reserve(faces.size() * 3);
    for (const auto& f : faces) {
        for (int k = 0; k < 3; ++k) {
            uint32_t a = f[k], b = f[(k + 1) % 3];
            if (a >= vertex_count || b >= vertex_count)
                throw MeshError("face index out of range: " + std::to_string(std::max(a, b)));
            if (a == b) throw MeshError("degenerate face edge (self-loop) at vertex " + std::to_string(a));
            if (a > b) std::swap(a, b);
            edges.emplace_back(a, b);
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, size_t line_no, const std::string& what) {
    throw MeshError(path + ":" + std::to_string(line_no) + ": " + what);
}

// "3//7" -> 3 (OBJ texture/normal suffixes ignored)
long obj_vertex_index(const std::string& token) {
    size_t slash = token.find('/');
    const std::string head = slash == std::string::npos ? token : token.substr(0, slash);
    size_t pos = 0;
    long v = std::stol(head, &pos);
    if (pos != head.size()) throw MeshError("bad face index '" + token + "'");
    return v;
}

Mesh load_obj(const std::string& path, std::istream& in) {
    Mesh mesh;
    std::vector<double> verts;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) parse_fail(path, line_no, "malformed vertex line");
            verts.push_back(x);
            verts.push_back(y);
            verts.push_back(z);
        } else if (tag == "f") {
            std::vector<long> idx;
            std::string tok;
            while (ls >> tok) {
                long v;
                try {
                    v = obj_vertex_index(tok);
                } catch (const MeshError& e) {
                    parse_fail(path, line_no, e.what());
                }
                const long n = static_cast<long>(verts.size() / 3);
                if (v < 0) v = n + 1 + v; // OBJ relative indexing
                if (v < 1 || v > n) parse_fail(path, line_no, "face index out of range: " + tok);
                idx.push_back(v - 1);
            }
            if (idx.size() < 3) parse_fail(path, line_no, "face with fewer than 3 vertices");
            // polygons are fan-triangulated from the first vertex
            for (size_t k = 1; k + 1 < idx.size(); ++k)
                mesh.faces.push_back({static_cast<uint32_t>(idx[0]), static_cast<uint32_t>(idx[k]),
                                      static_cast<uint32_t>(idx[k + 1])});
        }
        // other records (vt, vn, o, g, usemtl, ...) are ignored
    }
    if (verts.empty()) throw MeshError(path + ": no vertices");
    mesh.vertices.assign(verts.begin(), verts.end());
    mesh.edges = edges_from_faces(mesh.faces, mesh.vertex_count());
    return mesh;
}

Mesh load_ply(const std::string& path, std::istream& in) {
    std::string line;
    size_t line_no = 0;
    auto next_line = [&]() {
        if (!std::getline(in, line)) parse_fail(path, line_no, "unexpected end of file");
        ++line_no;
    };
    next_line();
    if (line.rfind("ply", 0) != 0) parse_fail(path, line_no, "missing ply magic");
    size_t n_verts = 0, n_faces = 0;
    size_t vertex_props = 0;
    bool in_vertex_element = false;
    bool ascii = false;
    for (;;) {
        next_line();
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            std::string fmt;
            ls >> fmt;
            ascii = fmt == "ascii";
        } else if (tag == "element") {
            std::string kind;
            size_t count;
            if (!(ls >> kind >> count)) parse_fail(path, line_no, "malformed element line");
            if (kind == "vertex") {
                n_verts = count;
                in_vertex_element = true;
            } else {
                if (kind == "face") n_faces = count;
                in_vertex_element = false;
            }
        } else if (tag == "property") {
            if (in_vertex_element) {
                std::string type;
                ls >> type;
                if (type != "list") ++vertex_props;
            }
        } else if (tag == "end_header") {
            break;
        } else if (tag == "comment" || tag == "obj_info") {
            continue;
        } else {
            parse_fail(path, line_no, "unrecognized header line: " + line);
        }
    }
    if (!ascii) parse_fail(path, line_no, "only ASCII PLY is supported");
    if (n_verts == 0) throw MeshError(path + ": no vertices");
    if (vertex_props < 3) parse_fail(path, line_no, "vertex element must carry x, y, z");

    Mesh mesh;
    mesh.vertices.reserve(n_verts * 3);
    for (size_t i = 0; i < n_verts; ++i) {
        next_line();
        std::istringstream ls(line);
        double x, y, z;
        if (!(ls >> x >> y >> z)) parse_fail(path, line_no, "malformed vertex line");
        mesh.vertices.push_back(static_cast<float>(x));
        mesh.vertices.push_back(static_cast<float>(y));
        mesh.vertices.push_back(static_cast<float>(z));
    }
    for (size_t i = 0; i < n_faces; ++i) {
        next_line();
        std::istringstream ls(line);
        size_t count;
        if (!(ls >> count) || count < 3) parse_fail(path, line_no, "malformed face line");
        std::vector<long> idx(count);
        for (auto& v : idx) {
            if (!(ls >> v)) parse_fail(path, line_no, "malformed face line");
            if (v < 0 || v >= static_cast<long>(n_verts))
                parse_fail(path, line_no, "face index out of range: " + std::to_string(v));
        }
        for (size_t k = 1; k + 1 < count; ++k)
            mesh.faces.push_back({static_cast<uint32_t>(idx[0]), static_cast<uint32_t>(idx[k]),
                                  static_cast<uint32_t>(idx[k + 1])});
    }
    mesh.edges = edges_from_faces(mesh.faces, mesh.vertex_count());
    return mesh;
}

bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

} // namespace

Mesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MeshError("cannot open " + path);
    Mesh mesh;
    if (has_suffix(path, ".ply")) {
        mesh = load_ply(path, in);
    } else if (has_suffix(path, ".obj")) {
        mesh = load_obj(path, in);
    } else {
        // sniff: PLY starts with its magic
        char magic[3] = {};
        in.read(magic, 3);
        in.seekg(0);
        mesh = (magic[0] == 'p' && magic[1] == 'l' && magic[2] == 'y') ? load_ply(path, in)
                                                                       : load_obj(path, in);
    }
    mesh.name = path;
    return mesh;
}

void save_mesh(const Mesh& mesh, const std::string& path, MeshFormat format) {
    std::ofstream out(path);
    if (!out) throw MeshError("cannot write " + path);
    char buf[128];
    if (format == MeshFormat::Obj) {
        for (size_t i = 0; i < mesh.vertex_count(); ++i) {
            const float* v = mesh.vertex(i);
            std::snprintf(buf, sizeof(buf), "v %.6f %.6f %.6f\n", v[0], v[1], v[2]);
            out << buf;
        }
        for (const auto& f : mesh.faces)
            out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    } else {
        out << "ply\nformat ascii 1.0\n";
        out << "element vertex " << mesh.vertex_count() << "\n";
        out << "property float x\nproperty float y\nproperty float z\n";
        out << "element face " << mesh.faces.size() << "\n";
        out << "property list uchar int vertex_indices\n";
        out << "end_header\n";
        for (size_t i = 0; i < mesh.vertex_count(); ++i) {
            const float* v = mesh.vertex(i);
            std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f\n", v[0], v[1], v[2]);
            out << buf;
        }
        for (const auto& f : mesh.faces)
            out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
    }
    if (!out) throw MeshError("write failure on " + path);
}

Mesh apply_permutation(const Mesh& mesh, const Permutation& perm) {
    const size_t n = mesh.vertex_count();
    if (perm.mapping.size() != n) throw MeshError("permutation size does not match vertex count");
    Mesh out;
    out.name = mesh.name;
    out.vertices.resize(n * 3);
    for (size_t i = 0; i < n; ++i) {
        const uint32_t j = perm.mapping[i];
        out.vertices[3 * j + 0] = mesh.vertices[3 * i + 0];
        out.vertices[3 * j + 1] = mesh.vertices[3 * i + 1];
        out.vertices[3 * j + 2] = mesh.vertices[3 * i + 2];
    }
    out.faces.reserve(mesh.faces.size());
    for (const auto& f : mesh.faces)
        out.faces.push_back({perm.mapping[f[0]], perm.mapping[f[1]], perm.mapping[f[2]]});
    out.edges.reserve(mesh.edges.size());
    for (const auto& [a, b] : mesh.edges) {
        uint32_t pa = perm.mapping[a], pb = perm.mapping[b];
        if (pa > pb) std::swap(pa, pb);
        out.edges.emplace_back(pa, pb);
    }
    std::sort(out.edges.begin(), out.edges.end());
    return out;
}

std::pair<Mesh, Permutation> random_reorder(const Mesh& mesh, uint64_t seed) {
    const size_t n = mesh.vertex_count();
    if (n < 1) throw MeshError("random_reorder: empty mesh");
    Permutation perm;
    perm.seed = seed;
    perm.mapping.resize(n);
    for (size_t i = 0; i < n; ++i) perm.mapping[i] = static_cast<uint32_t>(i);
    Xoshiro256ss rng(seed);
    // Fisher-Yates
    for (size_t i = n - 1; i > 0; --i) {
        const size_t j = rng.below(i + 1);
        std::swap(perm.mapping[i], perm.mapping[j]);
    }
    return {apply_permutation(mesh, perm), perm};
}

Mesh zero_center(const Mesh& mesh) {
    const size_t n = mesh.vertex_count();
    if (n < 1) throw MeshError("zero_center: empty mesh");
    float lo[3], hi[3];
    for (int k = 0; k < 3; ++k) {
        lo[k] = std::numeric_limits<float>::max();
        hi[k] = std::numeric_limits<float>::lowest();
    }
    for (size_t i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], mesh.vertices[3 * i + k]);
            hi[k] = std::max(hi[k], mesh.vertices[3 * i + k]);
        }
    Mesh out = mesh;
    for (int k = 0; k < 3; ++k) {
        const float c = (lo[k] + hi[k]) * 0.5f;
        for (size_t i = 0; i < n; ++i) out.vertices[3 * i + k] -= c;
    }
    return out;
}

std::pair<Mesh, Permutation> preprocess(const Mesh& mesh, uint64_t seed) {
    auto [reordered, perm] = random_reorder(mesh, seed);
    return {zero_center(reordered), perm};
}

} // namespace mapcon

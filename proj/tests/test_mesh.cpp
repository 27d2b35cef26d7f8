#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "mapcon/mesh.hpp"
#include "mapcon/rng.hpp"

using namespace mapcon;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("mapcon_mesh_test_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string write_file(const TempDir& dir, const std::string& name, const std::string& text) {
    const std::string p = dir.file(name);
    std::ofstream out(p);
    out << text;
    return p;
}

Mesh grid_mesh(size_t n) {
    // fan of triangles around vertex 0, n >= 3
    Mesh m;
    for (size_t i = 0; i < n; ++i) {
        m.vertices.push_back(static_cast<float>(i));
        m.vertices.push_back(static_cast<float>(i * i % 7));
        m.vertices.push_back(static_cast<float>(3 - static_cast<long>(i % 5)));
    }
    for (uint32_t i = 1; i + 1 < n; ++i) m.faces.push_back({0, i, i + 1});
    m.edges = edges_from_faces(m.faces, n);
    return m;
}

} // namespace

TEST_CASE("OBJ single triangle: vertices, faces, and derived edges") {
    TempDir dir;
    const std::string path = write_file(dir, "tri.obj",
                                        "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    Mesh m = load_mesh(path);
    REQUIRE(m.vertex_count() == 3);
    REQUIRE(m.faces.size() == 1);
    CHECK(m.faces[0] == std::array<uint32_t, 3>{0, 1, 2});
    std::set<std::pair<uint32_t, uint32_t>> edges(m.edges.begin(), m.edges.end());
    CHECK(edges == std::set<std::pair<uint32_t, uint32_t>>{{0, 1}, {0, 2}, {1, 2}});
}

TEST_CASE("OBJ face records with texture/normal suffixes parse identically") {
    TempDir dir;
    const std::string plain = write_file(dir, "a.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    const std::string suffixed =
        write_file(dir, "b.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1//1 2//2 3//3\n");
    Mesh a = load_mesh(plain);
    Mesh b = load_mesh(suffixed);
    CHECK(a.faces == b.faces);
    CHECK(a.edges == b.edges);
}

TEST_CASE("PLY with two triangles sharing an edge has 5 unique edges") {
    TempDir dir;
    const std::string path = write_file(dir, "quad.ply",
                                        "ply\nformat ascii 1.0\n"
                                        "element vertex 4\n"
                                        "property float x\nproperty float y\nproperty float z\n"
                                        "element face 2\n"
                                        "property list uchar int vertex_indices\n"
                                        "end_header\n"
                                        "0 0 0\n1 0 0\n1 1 0\n0 1 0\n"
                                        "3 0 1 2\n3 0 2 3\n");
    Mesh m = load_mesh(path);
    CHECK(m.vertex_count() == 4);
    CHECK(m.faces.size() == 2);
    CHECK(m.edges.size() == 5);
}

TEST_CASE("load errors: out-of-range index, empty file") {
    TempDir dir;
    const std::string bad_index = write_file(dir, "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n");
    CHECK_THROWS_AS(load_mesh(bad_index), MeshError);
    const std::string no_verts = write_file(dir, "empty.obj", "# nothing here\n");
    CHECK_THROWS_AS(load_mesh(no_verts), MeshError);
}

TEST_CASE("OBJ and PLY round-trips preserve topology exactly, coordinates to 1e-6") {
    TempDir dir;
    Mesh m = grid_mesh(10);
    for (auto& v : m.vertices) v *= 0.12345678f;
    for (MeshFormat fmt : {MeshFormat::Obj, MeshFormat::Ply}) {
        const std::string path = dir.file(fmt == MeshFormat::Obj ? "rt.obj" : "rt.ply");
        save_mesh(m, path, fmt);
        Mesh r = load_mesh(path);
        REQUIRE(r.vertex_count() == m.vertex_count());
        CHECK(r.faces == m.faces);
        CHECK(r.edges == m.edges);
        for (size_t i = 0; i < m.vertices.size(); ++i)
            CHECK(std::abs(r.vertices[i] - m.vertices[i]) <= 1e-6f);
    }
}

TEST_CASE("faceless mesh round-trips as a point cloud") {
    TempDir dir;
    Mesh m;
    m.vertices = {0, 0, 0, 1, 2, 3, -1, 0.5f, 2};
    const std::string path = dir.file("cloud.ply");
    save_mesh(m, path, MeshFormat::Ply);
    Mesh r = load_mesh(path);
    CHECK(r.vertex_count() == 3);
    CHECK(r.faces.empty());
    CHECK(r.edges.empty());
}

TEST_CASE("random_reorder: vertex multiset, remapped edges, reproducibility") {
    Mesh m = grid_mesh(10);
    auto [shuffled, perm] = random_reorder(m, 77);
    REQUIRE(shuffled.vertex_count() == m.vertex_count());

    // same point multiset
    auto rows = [](const Mesh& mm) {
        std::vector<std::array<float, 3>> r(mm.vertex_count());
        for (size_t i = 0; i < r.size(); ++i)
            r[i] = {mm.vertex(i)[0], mm.vertex(i)[1], mm.vertex(i)[2]};
        std::sort(r.begin(), r.end());
        return r;
    };
    CHECK(rows(m) == rows(shuffled));

    // permutation moves each vertex where the mapping says
    for (size_t i = 0; i < m.vertex_count(); ++i)
        for (int k = 0; k < 3; ++k)
            CHECK(shuffled.vertex(perm.mapping[i])[k] == m.vertex(i)[k]);

    // every original edge appears remapped
    std::set<std::pair<uint32_t, uint32_t>> out_edges(shuffled.edges.begin(), shuffled.edges.end());
    for (auto [i, j] : m.edges) {
        uint32_t a = perm.mapping[i], b = perm.mapping[j];
        if (a > b) std::swap(a, b);
        CHECK(out_edges.count({a, b}) == 1);
    }

    // bitwise reproducible
    auto [again, perm2] = random_reorder(m, 77);
    CHECK(again.vertices == shuffled.vertices);
    CHECK(perm2.mapping == perm.mapping);

    // single vertex: only the identity permutation exists
    Mesh one;
    one.vertices = {4, 5, 6};
    auto [same, p1] = random_reorder(one, 123);
    CHECK(same.vertices == one.vertices);
    CHECK(p1.mapping == std::vector<uint32_t>{0});
}

TEST_CASE("zero_center: symmetric box, idempotence, degenerate single vertex") {
    Mesh m;
    m.vertices = {0, 0, 0, 2, 2, 2};
    Mesh c = zero_center(m);
    CHECK(c.vertices == std::vector<float>{-1, -1, -1, 1, 1, 1});
    Mesh cc = zero_center(c);
    for (size_t i = 0; i < c.vertices.size(); ++i)
        CHECK(std::abs(cc.vertices[i] - c.vertices[i]) <= 1e-7f);

    Mesh single;
    single.vertices = {5, -3, 1};
    Mesh s = zero_center(single);
    CHECK(s.vertices == std::vector<float>{0, 0, 0});
}

TEST_CASE("zero_center is translation-equivariant") {
    Mesh m = grid_mesh(8);
    Mesh t = m;
    for (size_t i = 0; i < t.vertex_count(); ++i) {
        t.vertex(i)[0] += 17.5f;
        t.vertex(i)[1] -= 3.25f;
        t.vertex(i)[2] += 0.125f;
    }
    Mesh a = zero_center(m), b = zero_center(t);
    for (size_t i = 0; i < a.vertices.size(); ++i)
        CHECK(std::abs(a.vertices[i] - b.vertices[i]) <= 1e-6f);
}

TEST_CASE("preprocess = reorder then zero-center") {
    Mesh m = grid_mesh(9);
    auto [got, perm] = preprocess(m, 99);
    auto [reordered, perm2] = random_reorder(m, 99);
    Mesh expected = zero_center(reordered);
    CHECK(perm.mapping == perm2.mapping);
    CHECK(got.vertices == expected.vertices);
    CHECK(got.edges == expected.edges);
}

TEST_CASE("apply_permutation keeps a ground truth aligned with its reordered twin") {
    Mesh a = grid_mesh(12);
    Mesh b = a;
    for (auto& v : b.vertices) v += 1.0f; // same topology, shifted coordinates
    auto [a_shuffled, perm] = random_reorder(a, 5);
    Mesh b_aligned = apply_permutation(b, perm);
    for (size_t i = 0; i < a.vertex_count(); ++i)
        for (int k = 0; k < 3; ++k)
            CHECK(b_aligned.vertex(i)[k] == doctest::Approx(a_shuffled.vertex(i)[k] + 1.0f));
    CHECK(b_aligned.edges == a_shuffled.edges);
}

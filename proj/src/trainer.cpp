#include "mapcon/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mapcon/rng.hpp"

namespace mapcon {

const char* mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::Supervised: return "supervised";
        case TrainMode::Unsupervised: return "unsupervised";
        case TrainMode::Semi: return "semi";
    }
    return "?";
}

TrainMode parse_mode(const std::string& name) {
    if (name == "supervised") return TrainMode::Supervised;
    if (name == "unsupervised") return TrainMode::Unsupervised;
    if (name == "semi") return TrainMode::Semi;
    throw TensorError("unknown training mode '" + name + "' (expected supervised|unsupervised|semi)");
}

float lr_at(size_t step, size_t total_steps, float lr0) {
    if (total_steps == 0) throw TensorError("lr_at: total_steps must be positive");
    const size_t half = total_steps / 2;
    if (step < half || total_steps == 1) return lr0;
    const double tail = static_cast<double>(total_steps - half);
    return static_cast<float>(lr0 * static_cast<double>(total_steps - step) / tail);
}

std::string log_preamble(const TrainingConfig& cfg) {
    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "# mode=%s lambda_rec=%g lambda_edge=%g lambda_mesh_cc=%g lambda_mesh_ss=%g "
                  "lambda_point=%g margin=%g lr0=%g epsilon=%g iterations=%zu batch=%zu epochs=%zu",
                  mode_name(cfg.mode), static_cast<double>(cfg.weights.lambda_rec),
                  static_cast<double>(cfg.weights.lambda_edge),
                  static_cast<double>(cfg.weights.lambda_mesh_cc),
                  static_cast<double>(cfg.weights.lambda_mesh_ss),
                  static_cast<double>(cfg.weights.lambda_point),
                  static_cast<double>(cfg.weights.margin), static_cast<double>(cfg.lr0),
                  cfg.sinkhorn.epsilon, cfg.sinkhorn.iterations, cfg.batch_size, cfg.epochs);
    return buf;
}

std::string log_header() {
    return "epoch,iter,mode,lr,l_rec,l_edge,l_mesh_cc,l_mesh_ss,l_point,total";
}

std::string log_line(const StepRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%c,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g",
                  r.epoch, r.iter, r.mode, static_cast<double>(r.lr), static_cast<double>(r.l_rec),
                  static_cast<double>(r.l_edge), static_cast<double>(r.l_mesh_cc),
                  static_cast<double>(r.l_mesh_ss), static_cast<double>(r.l_point),
                  static_cast<double>(r.total));
    return buf;
}

std::vector<WorkItem> semi_schedule(size_t n_steps, size_t n_labelled, size_t n_unlabelled,
                                    size_t steps_per_epoch, size_t stage_switch_epoch) {
    if (n_labelled == 0) throw TensorError("semi_schedule: labelled partition is empty");
    if (steps_per_epoch == 0) throw TensorError("semi_schedule: steps_per_epoch must be positive");
    std::vector<WorkItem> out;
    out.reserve(n_steps);
    size_t n_u = 0;
    for (size_t t = 0; t < n_steps; ++t) {
        bool unlabelled_turn;
        if (n_unlabelled == 0) {
            unlabelled_turn = false; // degenerates to all-labelled
        } else if (stage_switch_epoch > 0) {
            unlabelled_turn = (t / steps_per_epoch) >= stage_switch_epoch;
        } else {
            unlabelled_turn = (t % 2) == 1;
        }
        if (unlabelled_turn) {
            out.push_back({'U', static_cast<int>(n_u % 3)});
            ++n_u;
        } else {
            out.push_back({'L', -1});
        }
    }
    return out;
}

// Dataset ------------------------------------------------------------------

namespace {

std::string mesh_key(const std::string& identity, const std::string& pose) {
    return identity + "\x1f" + pose;
}

void collect_axes(const std::vector<ManifestEntry>& entries, std::vector<std::string>& ids,
                  std::vector<std::string>& poses) {
    for (const auto& e : entries) {
        if (std::find(ids.begin(), ids.end(), e.identity_id) == ids.end())
            ids.push_back(e.identity_id);
        if (std::find(poses.begin(), poses.end(), e.pose_id) == poses.end())
            poses.push_back(e.pose_id);
    }
}

} // namespace

Dataset::Dataset(const DatasetManifest& manifest) {
    if (manifest.entries.empty()) throw MeshError("Dataset: manifest has no entries");
    meshes_.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        const std::string key = mesh_key(e.identity_id, e.pose_id);
        if (by_key_.count(key))
            throw MeshError("Dataset: duplicate manifest entry " + e.identity_id + "/" + e.pose_id);
        by_key_.emplace(key, meshes_.size());
        meshes_.push_back(load_mesh(manifest.root_dir + "/" + e.relative_path));
        if (e.labelled) ++n_labelled_;
        else ++n_unlabelled_;
    }
    collect_axes(manifest.labelled(), lab_ids_, lab_poses_);
    collect_axes(manifest.unlabelled(), unlab_ids_, unlab_poses_);
}

bool Dataset::has(const std::string& identity, const std::string& pose) const {
    return by_key_.count(mesh_key(identity, pose)) != 0;
}

const Mesh& Dataset::mesh(const std::string& identity, const std::string& pose) const {
    auto it = by_key_.find(mesh_key(identity, pose));
    if (it == by_key_.end())
        throw MeshError("Dataset: no mesh for identity " + identity + " pose " + pose);
    return meshes_[it->second];
}

const Mesh& Dataset::ground_truth(const std::string& identity, const std::string& pose) const {
    ++gt_accesses_;
    return mesh(identity, pose);
}

// Checkpoints ----------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'A', 'P', 'C'};
constexpr uint32_t kVersion = 1;

void write_u16(std::ostream& out, uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t read_u16(std::istream& in, const std::string& path) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) throw TensorError(path + ": truncated checkpoint");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw TensorError(path + ": truncated checkpoint");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_named(std::ostream& out, const std::string& name, const Shape& shape,
                 const std::vector<float>& values) {
    if (name.size() > 0xffff) throw TensorError("checkpoint: tensor name too long");
    write_u16(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(shape.size()));
    for (size_t d : shape) write_u32(out, static_cast<uint32_t>(d));
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * 4));
}

} // namespace

void save_checkpoint(const ParamStore<float>& params, const AdamState<float>& opt,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TensorError("cannot write checkpoint " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<uint32_t>(3 * params.entries.size() + 1));
    for (const auto& e : params.entries) write_named(out, e.name, e.shape, e.values);
    for (const auto& e : params.entries) {
        const std::vector<float> zeros(e.values.size(), 0.0f);
        auto mi = opt.m.find(e.name);
        auto vi = opt.v.find(e.name);
        write_named(out, e.name + "/m", e.shape, mi == opt.m.end() ? zeros : mi->second);
        write_named(out, e.name + "/v", e.shape, vi == opt.v.end() ? zeros : vi->second);
    }
    write_named(out, "__step", {1}, {static_cast<float>(opt.step)});
    if (!out) throw TensorError("write failure on checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TensorError("cannot open checkpoint " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw TensorError(path + ": not a checkpoint file (bad magic)");
    const uint32_t version = read_u32(in, path);
    if (version != kVersion)
        throw TensorError(path + ": unsupported checkpoint version " + std::to_string(version));
    const uint32_t count = read_u32(in, path);
    Checkpoint ckpt;
    bool saw_step = false;
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = read_u16(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw TensorError(path + ": truncated checkpoint");
        const int rank = in.get();
        if (rank < 0) throw TensorError(path + ": truncated checkpoint");
        Shape shape(static_cast<size_t>(rank));
        for (auto& d : shape) d = read_u32(in, path);
        std::vector<float> values(shape_size(shape));
        if (!in.read(reinterpret_cast<char*>(values.data()),
                     static_cast<std::streamsize>(values.size() * 4)))
            throw TensorError(path + ": truncated checkpoint");
        if (name == "__step") {
            if (values.size() != 1) throw TensorError(path + ": malformed __step tensor");
            ckpt.opt.step = std::lround(static_cast<double>(values[0]));
            saw_step = true;
        } else if (name.size() > 2 && name.compare(name.size() - 2, 2, "/m") == 0) {
            ckpt.opt.m[name.substr(0, name.size() - 2)] = std::move(values);
        } else if (name.size() > 2 && name.compare(name.size() - 2, 2, "/v") == 0) {
            ckpt.opt.v[name.substr(0, name.size() - 2)] = std::move(values);
        } else {
            ckpt.params.add(std::move(name), std::move(shape), std::move(values));
        }
    }
    if (!saw_step) throw TensorError(path + ": checkpoint is missing the optimizer step");
    for (const auto& e : ckpt.params.entries) {
        if (!ckpt.opt.m.count(e.name) || !ckpt.opt.v.count(e.name))
            throw TensorError(path + ": checkpoint is missing optimizer state for " + e.name);
    }
    return ckpt;
}

// Trainer --------------------------------------------------------------------

namespace {

enum class Pool { Labelled, Unlabelled, All };

struct PoolView {
    const std::vector<std::string>* ids;
    const std::vector<std::string>* poses;
};

// role salts for the per-step derived RNG streams
constexpr uint64_t kSaltSample = 0x5a;
constexpr uint64_t kSaltReorderA = 0xa1;
constexpr uint64_t kSaltReorderB = 0xb1;

Tensor<float> points_tensor(Tape<float>& tape, const Mesh& mesh) {
    return tape.constant({mesh.vertex_count(), 3}, mesh.vertices);
}

size_t distinct_draw(Xoshiro256ss& rng, size_t n, size_t taken) {
    // uniform over [0, n) \ {taken}
    return (taken + 1 + rng.below(n - 1)) % n;
}

} // namespace

Trainer::Trainer(TrainingConfig cfg, const DatasetManifest& manifest)
    : cfg_(std::move(cfg)), data_(manifest) {
    cfg_.dims.validate();
    if (cfg_.batch_size == 0) throw TensorError("Trainer: batch_size must be positive");
    if (cfg_.epochs == 0) throw TensorError("Trainer: epochs must be positive");

    const bool needs_labelled = cfg_.mode != TrainMode::Unsupervised;
    if (needs_labelled && (data_.labelled_ids().size() < 2 || data_.labelled_poses().size() < 2))
        throw MeshError("Trainer: labelled partition needs at least 2 identities and 2 poses");
    if (cfg_.mode == TrainMode::Unsupervised &&
        (data_.labelled_ids().size() + data_.unlabelled_ids().size() < 2))
        throw MeshError("Trainer: unsupervised training needs at least 2 identities");
    // sampling draws (identity, pose) grid cells; each partition in play must
    // be a complete grid over its own axes
    auto check_grid = [&](const std::vector<std::string>& ids, const std::vector<std::string>& poses,
                          const char* part) {
        for (const auto& i : ids)
            for (const auto& p : poses)
                if (!data_.has(i, p))
                    throw MeshError(std::string("Trainer: ") + part + " partition is missing " + i +
                                    "/" + p);
    };
    if (cfg_.mode != TrainMode::Unsupervised)
        check_grid(data_.labelled_ids(), data_.labelled_poses(), "labelled");
    else
        check_grid(data_.labelled_ids(), data_.labelled_poses(), "pooled");
    check_grid(data_.unlabelled_ids(), data_.unlabelled_poses(), "unlabelled");

    size_t pool;
    switch (cfg_.mode) {
        case TrainMode::Supervised: pool = data_.labelled_count(); break;
        case TrainMode::Unsupervised: pool = data_.total_count(); break;
        case TrainMode::Semi: pool = data_.total_count(); break;
        default: pool = data_.total_count();
    }
    steps_per_epoch_ = (pool + cfg_.batch_size - 1) / cfg_.batch_size;

    switch (cfg_.mode) {
        case TrainMode::Supervised:
            schedule_.assign(total_steps(), WorkItem{'L', -1});
            break;
        case TrainMode::Unsupervised:
            schedule_.assign(total_steps(), WorkItem{'U', -1});
            break;
        case TrainMode::Semi:
            schedule_ = semi_schedule(total_steps(), data_.labelled_count(), data_.unlabelled_count(),
                                      steps_per_epoch_, cfg_.stage_switch_epoch);
            break;
    }

    params_ = init_generator_params<float>(cfg_.dims, cfg_.seed_init);
}

void Trainer::restore(const Checkpoint& ckpt) {
    if (ckpt.params.entries.size() != params_.entries.size())
        throw TensorError("restore: checkpoint has " + std::to_string(ckpt.params.entries.size()) +
                          " tensors, model expects " + std::to_string(params_.entries.size()));
    for (const auto& e : ckpt.params.entries) {
        auto& mine = params_.at(e.name);
        if (mine.shape != e.shape)
            throw TensorError("restore: shape mismatch for " + e.name + ": checkpoint " +
                              shape_str(e.shape) + " vs model " + shape_str(mine.shape));
        mine.values = e.values;
    }
    opt_ = ckpt.opt;
}

// one labelled iteration: supervised reconstruction against exact ground truth
Trainer::SampleLoss Trainer::supervised_sample(Tape<float>& tape, const BoundParams<float>& bound,
                                               size_t step, size_t sample) {
    Xoshiro256ss rng(mix_seed(mix_seed(cfg_.seed_shuffle, mix_seed(step, sample)), kSaltSample));
    const auto& ids = data_.labelled_ids();
    const auto& poses = data_.labelled_poses();
    const size_t ia = rng.below(ids.size());
    const size_t ib = distinct_draw(rng, ids.size(), ia);
    const size_t p1 = rng.below(poses.size());
    const size_t p2 = distinct_draw(rng, poses.size(), p1);

    const uint64_t base = mix_seed(cfg_.seed_reorder, mix_seed(step, sample));
    auto [mesh_a1, perm_a] = preprocess(data_.mesh(ids[ia], poses[p1]), mix_seed(base, kSaltReorderA));
    auto [mesh_b2, perm_b] = random_reorder(data_.mesh(ids[ib], poses[p2]), mix_seed(base, kSaltReorderB));
    mesh_b2 = zero_center(mesh_b2);
    // ground truth rides the identity input's permutation so rows align
    Mesh gt_b1 = zero_center(apply_permutation(data_.ground_truth(ids[ib], poses[p1]), perm_b));

    Tensor<float> x_a1 = points_tensor(tape, mesh_a1);
    Tensor<float> x_b2 = points_tensor(tape, mesh_b2);
    Tensor<float> gt = points_tensor(tape, gt_b1);

    auto gen = generate(bound, cfg_.dims, x_a1, x_b2, cfg_.sinkhorn);
    LatentFeature<float> feat_w = feature_extract(bound, cfg_.dims, gen.warped);

    Tensor<float> l_rec = rec_loss(gen.final, gt);
    Tensor<float> l_edge = edge_loss(gen.final, x_b2, mesh_b2.edges);
    Tensor<float> l_sup = add(mul_scalar(l_rec, cfg_.weights.lambda_rec),
                              mul_scalar(l_edge, cfg_.weights.lambda_edge));
    Tensor<float> l_ss = mesh_ss_loss(feat_w.pose(), gen.feat_pose.pose(), gen.feat_id.pose(),
                                      feat_w.identity(), gen.feat_id.identity(),
                                      gen.feat_pose.identity(), gen.binary, cfg_.weights.margin);
    Tensor<float> l_pt = point_triplet(feat_w.values, gen.feat_id.values, cfg_.weights.margin);

    SampleLoss out{labelled_total(l_sup, l_ss, l_pt, cfg_.weights)};
    out.l_rec = l_rec.vals()[0];
    out.l_edge = l_edge.vals()[0];
    out.l_mesh_ss = l_ss.vals()[0];
    out.l_point = l_pt.vals()[0];
    return out;
}

// one unlabelled iteration: cross- plus self-consistency, no ground truth read
Trainer::SampleLoss Trainer::unsupervised_sample(Tape<float>& tape, const BoundParams<float>& bound,
                                                 size_t step, size_t sample, int ucase) {
    // identity-pair pool and pose-donor pool per mixing case
    Pool pair_pool = Pool::All, other_pool = Pool::All;
    if (cfg_.mode == TrainMode::Semi) {
        switch (ucase) {
            case 0: pair_pool = Pool::Unlabelled; other_pool = Pool::Labelled; break;
            case 1: pair_pool = Pool::Labelled; other_pool = Pool::Unlabelled; break;
            default: pair_pool = Pool::Unlabelled; other_pool = Pool::Unlabelled; break;
        }
    }
    auto view = [&](Pool p) -> PoolView {
        switch (p) {
            case Pool::Labelled: return {&data_.labelled_ids(), &data_.labelled_poses()};
            case Pool::Unlabelled: return {&data_.unlabelled_ids(), &data_.unlabelled_poses()};
            default: return {nullptr, nullptr};
        }
    };

    Xoshiro256ss rng(mix_seed(mix_seed(cfg_.seed_shuffle, mix_seed(step, sample)), kSaltSample));

    // identity A with two poses, identity B with one pose
    std::string id_a, pose1, pose2, id_b, pose3;
    const PoolView pv = view(pair_pool);
    if (pv.ids) {
        if (pv.ids->empty() || pv.poses->size() < 2)
            throw MeshError("Trainer: partition too small for an unlabelled pose pair");
        id_a = (*pv.ids)[rng.below(pv.ids->size())];
        const size_t p1 = rng.below(pv.poses->size());
        pose1 = (*pv.poses)[p1];
        pose2 = (*pv.poses)[distinct_draw(rng, pv.poses->size(), p1)];
    } else {
        // combined pool: pick any identity owning at least two poses
        const bool lab_ok = data_.labelled_ids().size() > 0 && data_.labelled_poses().size() >= 2;
        const bool unlab_ok = data_.unlabelled_ids().size() > 0 && data_.unlabelled_poses().size() >= 2;
        if (!lab_ok && !unlab_ok)
            throw MeshError("Trainer: no identity has two poses for unsupervised training");
        const size_t n_lab = lab_ok ? data_.labelled_ids().size() : 0;
        const size_t n_unlab = unlab_ok ? data_.unlabelled_ids().size() : 0;
        const size_t pick = rng.below(n_lab + n_unlab);
        const PoolView sel = pick < n_lab ? view(Pool::Labelled) : view(Pool::Unlabelled);
        id_a = (*sel.ids)[pick < n_lab ? pick : pick - n_lab];
        const size_t p1 = rng.below(sel.poses->size());
        pose1 = (*sel.poses)[p1];
        pose2 = (*sel.poses)[distinct_draw(rng, sel.poses->size(), p1)];
    }
    const PoolView ov = view(other_pool);
    if (ov.ids) {
        if (ov.ids->empty()) throw MeshError("Trainer: partition has no pose donor");
        // avoid the pair identity when the partitions overlap
        size_t ib = rng.below(ov.ids->size());
        if ((*ov.ids)[ib] == id_a && ov.ids->size() > 1) ib = distinct_draw(rng, ov.ids->size(), ib);
        id_b = (*ov.ids)[ib];
        pose3 = (*ov.poses)[rng.below(ov.poses->size())];
    } else {
        const size_t n_lab = data_.labelled_ids().size();
        const size_t n_all = n_lab + data_.unlabelled_ids().size();
        size_t pick = rng.below(n_all);
        auto id_at = [&](size_t k) {
            return k < n_lab ? data_.labelled_ids()[k] : data_.unlabelled_ids()[k - n_lab];
        };
        if (id_at(pick) == id_a) pick = (pick + 1 + rng.below(n_all - 1)) % n_all;
        id_b = id_at(pick);
        const auto& bposes = pick < n_lab ? data_.labelled_poses() : data_.unlabelled_poses();
        pose3 = bposes[rng.below(bposes.size())];
    }

    const uint64_t base = mix_seed(cfg_.seed_reorder, mix_seed(step, sample));
    // x^{A1} and x^{A2} share one permutation so the consistency targets align
    auto [mesh_a1, perm_a] = random_reorder(data_.mesh(id_a, pose1), mix_seed(base, kSaltReorderA));
    mesh_a1 = zero_center(mesh_a1);
    Mesh mesh_a2 = zero_center(apply_permutation(data_.mesh(id_a, pose2), perm_a));
    auto [mesh_b3, perm_b] = preprocess(data_.mesh(id_b, pose3), mix_seed(base, kSaltReorderB));

    Tensor<float> x_a1 = points_tensor(tape, mesh_a1);
    Tensor<float> x_a2 = points_tensor(tape, mesh_a2);
    Tensor<float> x_b3 = points_tensor(tape, mesh_b3);

    // cross-consistency: reconstruct x^{A1} from its own identity
    auto gen_cc = generate(bound, cfg_.dims, x_a1, x_a2, cfg_.sinkhorn);
    // self-consistency, first pass: transfer the pose onto identity B
    auto gen_s1 = generate(bound, cfg_.dims, x_a1, x_b3, cfg_.sinkhorn);
    // second pass: transfer it back via the detached intermediate output
    Tensor<float> detached = stop_gradient(gen_s1.final);
    auto gen_s2 = generate(bound, cfg_.dims, detached, x_a2, cfg_.sinkhorn);

    LatentFeature<float> feat_wa = feature_extract(bound, cfg_.dims, gen_cc.warped);
    LatentFeature<float> feat_wb = feature_extract(bound, cfg_.dims, gen_s1.warped);
    LatentFeature<float> feat_wt = feature_extract(bound, cfg_.dims, gen_s2.warped);

    Tensor<float> l_rec = add(rec_loss(gen_cc.final, x_a1), rec_loss(gen_s2.final, x_a1));
    Tensor<float> l_edge = add(edge_loss(gen_cc.final, x_a2, mesh_a2.edges),
                               edge_loss(gen_s2.final, x_a2, mesh_a2.edges));
    Tensor<float> l_us = add(mul_scalar(l_rec, cfg_.weights.lambda_rec),
                             mul_scalar(l_edge, cfg_.weights.lambda_edge));

    Tensor<float> l_cc = mesh_cc_loss(gen_cc.feat_pose.pose(), feat_wa.pose(), gen_cc.feat_id.pose(),
                                      gen_cc.feat_pose.identity(), gen_cc.feat_id.identity(),
                                      feat_wa.identity(), cfg_.weights.margin);
    Tensor<float> l_ss1 = mesh_ss_loss(feat_wb.pose(), gen_s1.feat_pose.pose(), gen_s1.feat_id.pose(),
                                       feat_wb.identity(), gen_s1.feat_id.identity(),
                                       gen_s1.feat_pose.identity(), gen_s1.binary, cfg_.weights.margin);
    Tensor<float> l_ss2 = mesh_ss_loss(feat_wt.pose(), gen_s2.feat_pose.pose(), gen_s2.feat_id.pose(),
                                       feat_wt.identity(), gen_s2.feat_id.identity(),
                                       gen_s2.feat_pose.identity(), gen_s2.binary, cfg_.weights.margin);
    Tensor<float> l_ss = add(l_ss1, l_ss2);

    Tensor<float> l_pt = add(add(point_triplet(feat_wa.values, gen_cc.feat_id.values, cfg_.weights.margin),
                                 point_triplet(feat_wb.values, gen_s1.feat_id.values, cfg_.weights.margin)),
                             point_triplet(feat_wt.values, gen_s2.feat_id.values, cfg_.weights.margin));

    SampleLoss out{unlabelled_total(l_us, l_cc, l_ss, l_pt, cfg_.weights)};
    out.l_rec = l_rec.vals()[0];
    out.l_edge = l_edge.vals()[0];
    out.l_mesh_cc = l_cc.vals()[0];
    out.l_mesh_ss = l_ss.vals()[0];
    out.l_point = l_pt.vals()[0];
    return out;
}

StepRecord Trainer::train_step() {
    const size_t t = current_step();
    const WorkItem item = schedule_.empty() ? WorkItem{'L', -1}
                                            : schedule_[std::min(t, schedule_.size() - 1)];

    Tape<float> tape;
    BoundParams<float> bound = bind_params(tape, params_);

    StepRecord rec;
    rec.epoch = t / steps_per_epoch_;
    rec.iter = t % steps_per_epoch_;
    rec.mode = item.tag;

    Tensor<float> total = tape.constant({1}, {0.0f});
    for (size_t s = 0; s < cfg_.batch_size; ++s) {
        SampleLoss sl = item.tag == 'U' ? unsupervised_sample(tape, bound, t, s, item.ucase)
                                        : supervised_sample(tape, bound, t, s);
        total = add(total, sl.total);
        rec.l_rec += sl.l_rec;
        rec.l_edge += sl.l_edge;
        rec.l_mesh_cc += sl.l_mesh_cc;
        rec.l_mesh_ss += sl.l_mesh_ss;
        rec.l_point += sl.l_point;
    }
    const float inv = 1.0f / static_cast<float>(cfg_.batch_size);
    total = mul_scalar(total, inv);
    rec.l_rec *= inv;
    rec.l_edge *= inv;
    rec.l_mesh_cc *= inv;
    rec.l_mesh_ss *= inv;
    rec.l_point *= inv;
    rec.total = total.vals()[0];
    if (!std::isfinite(static_cast<double>(rec.total)))
        throw NonFiniteError("train_step: non-finite loss at step " + std::to_string(t));

    GradMap<float> gm = tape.backward(total);
    auto grads = named_grads(bound, gm);
    rec.lr = lr_at(t, total_steps(), cfg_.lr0);
    adam_step(params_, grads, opt_, rec.lr);
    return rec;
}

std::vector<StepRecord> Trainer::run() {
    std::ofstream log;
    if (!cfg_.log_path.empty()) {
        const bool fresh = current_step() == 0 || !std::filesystem::exists(cfg_.log_path);
        log.open(cfg_.log_path, fresh ? std::ios::out : std::ios::app);
        if (!log) throw TensorError("cannot open training log " + cfg_.log_path);
        if (fresh) log << log_preamble(cfg_) << "\n" << log_header() << "\n";
    }
    std::vector<StepRecord> records;
    const size_t end = total_steps();
    while (current_step() < end) {
        StepRecord rec = train_step();
        if (log.is_open()) log << log_line(rec) << "\n";
        records.push_back(rec);
        const bool epoch_done = current_step() % steps_per_epoch_ == 0;
        if (!cfg_.checkpoint_path.empty() && cfg_.checkpoint_interval > 0 && epoch_done &&
            (current_step() / steps_per_epoch_) % cfg_.checkpoint_interval == 0)
            save_checkpoint(params_, opt_, cfg_.checkpoint_path);
    }
    if (!cfg_.checkpoint_path.empty()) save_checkpoint(params_, opt_, cfg_.checkpoint_path);
    if (log.is_open() && !log) throw TensorError("write failure on training log " + cfg_.log_path);
    return records;
}

// Inference --------------------------------------------------------------

TransferResult run_transfer(const ParamStore<float>& params, const ModelDims& dims,
                            const SinkhornConfig& sinkhorn_cfg, const Mesh& pose_mesh,
                            const Mesh& id_mesh) {
    Tape<float> tape;
    BoundParams<float> bound;
    for (const auto& e : params.entries)
        bound.tensors.emplace(e.name, tape.constant(e.shape, e.values));
    Tensor<float> pose_pts = points_tensor(tape, pose_mesh);
    Tensor<float> id_pts = points_tensor(tape, id_mesh);
    auto gen = generate(bound, dims, pose_pts, id_pts, sinkhorn_cfg);
    return {gen.final.vals(), gen.warped.vals()};
}

std::vector<EvalRow> evaluate_model(const ParamStore<float>& params, const ModelDims& dims,
                                    const SinkhornConfig& sinkhorn_cfg, const Dataset& data,
                                    size_t n_pairs, uint64_t eval_seed,
                                    std::vector<std::string>* warnings) {
    const auto& ids = data.labelled_ids();
    const auto& poses = data.labelled_poses();
    if (ids.size() < 2 || poses.size() < 2)
        throw MeshError("evaluate_model: needs at least 2 labelled identities and 2 poses");
    std::vector<EvalRow> rows;
    rows.reserve(n_pairs);
    for (size_t k = 0; k < n_pairs; ++k) {
        Xoshiro256ss rng(mix_seed(mix_seed(eval_seed, k), kSaltSample));
        const size_t ia = rng.below(ids.size());
        const size_t ib = distinct_draw(rng, ids.size(), ia);
        const size_t p1 = rng.below(poses.size());
        const size_t p2 = distinct_draw(rng, poses.size(), p1);

        EvalRow row;
        row.pair_id = ids[ia] + ":" + poses[p1] + "->" + ids[ib] + ":" + poses[p2];
        if (!data.has(ids[ib], poses[p1])) {
            if (!warnings)
                throw MeshError("evaluate_model: no ground truth for " + row.pair_id);
            warnings->push_back("no ground truth for pair " + row.pair_id);
            row.has_gt = false;
            rows.push_back(std::move(row));
            continue;
        }

        const uint64_t base = mix_seed(eval_seed, mix_seed(k, 0));
        auto [mesh_a1, perm_a] = preprocess(data.mesh(ids[ia], poses[p1]), mix_seed(base, kSaltReorderA));
        auto [mesh_b2, perm_b] = random_reorder(data.mesh(ids[ib], poses[p2]), mix_seed(base, kSaltReorderB));
        mesh_b2 = zero_center(mesh_b2);
        Mesh gt = zero_center(apply_permutation(data.ground_truth(ids[ib], poses[p1]), perm_b));

        TransferResult tr = run_transfer(params, dims, sinkhorn_cfg, mesh_a1, mesh_b2);
        std::vector<double> pred(tr.final_vertices.begin(), tr.final_vertices.end());
        std::vector<double> truth(gt.vertices.begin(), gt.vertices.end());
        row.report = evaluate_pair(pred, truth);
        rows.push_back(std::move(row));
    }
    return rows;
}

double mean_pmd(const std::vector<EvalRow>& rows) {
    double acc = 0.0;
    size_t n = 0;
    for (const auto& r : rows) {
        if (!r.has_gt) continue;
        acc += r.report.pmd;
        ++n;
    }
    if (n == 0) throw MetricError("mean_pmd: no evaluation rows with ground truth");
    return acc / static_cast<double>(n);
}

uint64_t evaluation_seed() {
    if (const char* env = std::getenv("MAPCON_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0' && end != env) return static_cast<uint64_t>(v);
        throw TensorError("MAPCON_SEED must be an unsigned integer, got '" + std::string(env) + "'");
    }
    return 9001;
}

} // namespace mapcon

// mapcon: pose transfer between unaligned meshes via optimal-transport
// correspondence. Subcommands cover dataset generation, training, transfer,
// evaluation, and gradient verification.
//
// Exit codes: 0 success, 1 runtime/I-O failure, 2 invalid flags,
// 3 non-finite training loss, 4 checkpoint/model dimension mismatch,
// 5 gradient check failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mapcon/gradcheck.hpp"
#include "mapcon/trainer.hpp"

namespace {

using namespace mapcon;

constexpr int kOk = 0, kFailure = 1, kUsage = 2, kNonFinite = 3, kDimMismatch = 4, kGradFail = 5;

// config file support: key=value lines become --key=value arguments inserted
// before the explicit flags, so explicit flags win (options take the last
// occurrence)
std::vector<std::string> load_config_args(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::vector<std::string> args;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto notspace = [](unsigned char c) { return !std::isspace(c); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key=value, got '" + line + "'");
        args.push_back("--" + line.substr(0, eq) + "=" + line.substr(eq + 1));
    }
    return args;
}

ModelDims dims_from(size_t scale, bool no_disentangle) {
    if (scale != 1 && scale != 4 && scale != 8)
        throw CLI::ValidationError("--dims-scale", "must be 1, 4 or 8");
    return ModelDims::scaled(scale, !no_disentangle);
}

// model tensors must match what the requested dims would create
void require_dims_match(const ParamStore<float>& loaded, const ModelDims& dims) {
    ParamStore<float> expect = init_generator_params<float>(dims, 1);
    if (loaded.entries.size() != expect.entries.size())
        throw TensorError("checkpoint holds " + std::to_string(loaded.entries.size()) +
                          " tensors, model dims expect " + std::to_string(expect.entries.size()));
    for (const auto& e : expect.entries) {
        if (!loaded.has(e.name)) throw TensorError("checkpoint is missing tensor " + e.name);
        if (loaded.at(e.name).shape != e.shape)
            throw TensorError("checkpoint tensor " + e.name + " has shape " +
                              shape_str(loaded.at(e.name).shape) + ", model dims expect " +
                              shape_str(e.shape));
    }
}

struct GenDataFlags {
    DatasetConfig cfg;
    std::string out_dir;
};

int cmd_gen_data(const GenDataFlags& f) {
    DatasetManifest manifest = make_dataset(f.cfg, f.out_dir);
    std::printf("wrote %zu meshes (%zu labelled, %zu unlabelled) to %s\n", manifest.entries.size(),
                manifest.labelled().size(), manifest.unlabelled().size(), f.out_dir.c_str());
    return kOk;
}

struct TrainFlags {
    TrainingConfig cfg;
    std::string mode = "supervised";
    std::string manifest_path;
    std::string out_dir;
    std::string resume;
    size_t dims_scale = 8;
    bool no_disentangle = false;
};

int cmd_train(TrainFlags& f) {
    f.cfg.mode = parse_mode(f.mode);
    f.cfg.dims = dims_from(f.dims_scale, f.no_disentangle);
    std::filesystem::create_directories(f.out_dir);
    f.cfg.checkpoint_path = f.out_dir + "/checkpoint.mapc";
    f.cfg.log_path = f.out_dir + "/train_log.csv";

    Trainer trainer(f.cfg, load_manifest(f.manifest_path));
    if (!f.resume.empty()) trainer.restore(load_checkpoint(f.resume));
    try {
        trainer.run();
    } catch (const NonFiniteError& e) {
        // the last periodic checkpoint, if any, stays on disk
        std::fprintf(stderr, "error: %s\n", e.what());
        return kNonFinite;
    }
    std::printf("trained %zu steps (%zu epochs x %zu steps); checkpoint: %s\n",
                trainer.current_step(), f.cfg.epochs, trainer.steps_per_epoch(),
                f.cfg.checkpoint_path.c_str());
    return kOk;
}

struct TransferFlags {
    std::string checkpoint, pose_path, id_path, out_path;
    bool emit_warped = false;
    size_t dims_scale = 8;
    bool no_disentangle = false;
    double epsilon = 0.05;
    size_t iterations = 30;
};

MeshFormat format_for(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".ply") return MeshFormat::Ply;
    return MeshFormat::Obj;
}

int cmd_transfer(const TransferFlags& f) {
    const ModelDims dims = dims_from(f.dims_scale, f.no_disentangle);
    Checkpoint ckpt = load_checkpoint(f.checkpoint);
    try {
        require_dims_match(ckpt.params, dims);
    } catch (const TensorError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kDimMismatch;
    }
    const uint64_t seed = evaluation_seed();
    auto [pose_mesh, pose_perm] = preprocess(load_mesh(f.pose_path), mix_seed(seed, 0));
    auto [id_mesh, id_perm] = preprocess(load_mesh(f.id_path), mix_seed(seed, 1));
    TransferResult tr =
        run_transfer(ckpt.params, dims, SinkhornConfig{f.epsilon, f.iterations}, pose_mesh, id_mesh);

    // the output carries the identity mesh's topology
    Mesh out = id_mesh;
    out.vertices = tr.final_vertices;
    out.name = "transfer";
    save_mesh(out, f.out_path, format_for(f.out_path));
    std::printf("wrote %s (%zu vertices)\n", f.out_path.c_str(), out.vertex_count());
    if (f.emit_warped) {
        Mesh warped = id_mesh;
        warped.vertices = tr.warped_vertices;
        warped.name = "warped";
        const auto dot = f.out_path.rfind('.');
        const std::string wpath = dot == std::string::npos
                                      ? f.out_path + ".warped"
                                      : f.out_path.substr(0, dot) + ".warped" + f.out_path.substr(dot);
        save_mesh(warped, wpath, format_for(wpath));
        std::printf("wrote %s (warped intermediate)\n", wpath.c_str());
    }
    return kOk;
}

struct EvalFlags {
    std::string checkpoint, manifest_path, out_csv;
    size_t n_pairs = 16;
    bool strict = false;
    size_t dims_scale = 8;
    bool no_disentangle = false;
    double epsilon = 0.05;
    size_t iterations = 30;
    uint64_t seed = 0; // 0 -> evaluation_seed()
};

int cmd_eval(const EvalFlags& f) {
    const ModelDims dims = dims_from(f.dims_scale, f.no_disentangle);
    Checkpoint ckpt = load_checkpoint(f.checkpoint);
    try {
        require_dims_match(ckpt.params, dims);
    } catch (const TensorError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kDimMismatch;
    }
    Dataset data(load_manifest(f.manifest_path));
    const uint64_t seed = f.seed != 0 ? f.seed : evaluation_seed();
    std::vector<std::string> warnings;
    std::vector<EvalRow> rows = evaluate_model(ckpt.params, dims, SinkhornConfig{f.epsilon, f.iterations},
                                               data, f.n_pairs, seed, &warnings);
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    if (f.strict && !warnings.empty()) {
        std::fprintf(stderr, "error: %zu pair(s) without ground truth under --strict\n",
                     warnings.size());
        return kFailure;
    }

    std::ofstream csv(f.out_csv);
    if (!csv) throw std::runtime_error("cannot write " + f.out_csv);
    // values in the customary reporting units: pmd and cd x 1e4, emd x 1e3
    csv << "pair_id,pmd,cd,emd,n_points,seconds\n";
    double sum_pmd = 0, sum_cd = 0, sum_emd = 0, sum_sec = 0;
    size_t n_valid = 0, sum_pts = 0;
    char buf[256];
    for (const auto& r : rows) {
        if (!r.has_gt) {
            csv << r.pair_id << ",missing_gt,missing_gt,missing_gt,0,0\n";
            continue;
        }
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%zu,%.4f", r.pair_id.c_str(),
                      r.report.pmd * 1e4, r.report.cd * 1e4, r.report.emd * 1e3, r.report.n_points,
                      r.report.seconds);
        csv << buf << "\n";
        sum_pmd += r.report.pmd;
        sum_cd += r.report.cd;
        sum_emd += r.report.emd;
        sum_sec += r.report.seconds;
        sum_pts += r.report.n_points;
        ++n_valid;
    }
    if (n_valid > 0) {
        const double inv = 1.0 / static_cast<double>(n_valid);
        std::snprintf(buf, sizeof(buf), "mean,%.6f,%.6f,%.6f,%zu,%.4f", sum_pmd * inv * 1e4,
                      sum_cd * inv * 1e4, sum_emd * inv * 1e3, sum_pts / n_valid, sum_sec * inv);
        csv << buf << "\n";
        std::printf("evaluated %zu pairs: mean pmd %.6f (x1e-4), cd %.6f (x1e-4), emd %.6f (x1e-3)\n",
                    n_valid, sum_pmd * inv * 1e4, sum_cd * inv * 1e4, sum_emd * inv * 1e3);
    }
    if (!csv) throw std::runtime_error("write failure on " + f.out_csv);
    std::printf("wrote %s\n", f.out_csv.c_str());
    return kOk;
}

struct GradcheckFlags {
    std::string which = "all";
    double tol = 1e-4;
    uint64_t seed = 1;
    std::vector<std::string> corrupt; // self-test hook; see gradcheck.hpp
};

int cmd_gradcheck(const GradcheckFlags& f) {
    std::vector<GradCheckResult> results = run_gradchecks(f.which, f.seed, f.tol, f.corrupt);
    std::vector<std::string> offenders;
    for (const auto& r : results) {
        std::printf("%-8s %-28s max_rel_err %.3e %s\n", r.group.c_str(), r.name.c_str(),
                    r.report.max_rel_err, r.report.pass ? "ok" : "FAIL");
        if (!r.report.pass) offenders.push_back(r.name);
    }
    std::printf("%zu checks, %zu failed\n", results.size(), offenders.size());
    if (!offenders.empty()) {
        std::fprintf(stderr, "gradient check failures:");
        for (const auto& n : offenders) std::fprintf(stderr, " %s", n.c_str());
        std::fprintf(stderr, "\n");
        return kGradFail;
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pose transfer between unaligned 3-d meshes"};
    app.require_subcommand(1);
    app.option_defaults()->take_last();

    GenDataFlags gd;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic articulated-tube dataset");
    gen->add_option("--n-ids", gd.cfg.n_ids, "number of identities");
    gen->add_option("--n-poses", gd.cfg.n_poses, "number of poses");
    gen->add_option("--seed", gd.cfg.seed, "generation seed");
    gen->add_option("--split", gd.cfg.labelled_split, "labelled fraction of identities and poses")
        ->check(CLI::Range(0.0, 1.0));
    gen->add_option("--noise", gd.cfg.noise, "uniform vertex noise amplitude");
    gen->add_option("--segments", gd.cfg.segments, "tube segments per mesh");
    gen->add_option("--rings", gd.cfg.rings, "rings per segment");
    gen->add_option("--sides", gd.cfg.sides, "sides per ring");
    gen->add_option("--out-dir", gd.out_dir, "output directory")->required();

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "train the generator");
    train->add_option("--mode", tf.mode, "supervised|unsupervised|semi");
    train->add_option("--manifest", tf.manifest_path, "dataset manifest")->required();
    train->add_option("--epochs", tf.cfg.epochs, "training epochs");
    train->add_option("--batch", tf.cfg.batch_size, "meshes per optimizer step");
    train->add_option("--lr", tf.cfg.lr0, "initial learning rate");
    train->add_option("--lambda-rec", tf.cfg.weights.lambda_rec, "reconstruction weight");
    train->add_option("--lambda-edge", tf.cfg.weights.lambda_edge, "edge-length weight");
    train->add_option("--lambda-mesh-cc", tf.cfg.weights.lambda_mesh_cc, "mesh triplet (cc) weight");
    train->add_option("--lambda-mesh-ss", tf.cfg.weights.lambda_mesh_ss, "mesh triplet (ss) weight");
    train->add_option("--lambda-point", tf.cfg.weights.lambda_point, "point triplet weight");
    train->add_option("--margin", tf.cfg.weights.margin, "triplet margin");
    train->add_option("--epsilon", tf.cfg.sinkhorn.epsilon, "Sinkhorn regularization");
    train->add_option("--iterations", tf.cfg.sinkhorn.iterations, "Sinkhorn iterations");
    train->add_option("--dims-scale", tf.dims_scale, "width divisor: 1, 4 or 8");
    train->add_flag("--no-disentangle", tf.no_disentangle, "style refinement from the pose channels instead of the identity channels");
    train->add_option("--seed-init", tf.cfg.seed_init, "weight init seed");
    train->add_option("--seed-shuffle", tf.cfg.seed_shuffle, "sampling seed");
    train->add_option("--seed-reorder", tf.cfg.seed_reorder, "vertex reorder seed");
    train->add_option("--checkpoint-interval", tf.cfg.checkpoint_interval,
                      "checkpoint every k epochs (0: final only)");
    train->add_option("--stage-switch-epoch", tf.cfg.stage_switch_epoch,
                      "semi mode: labelled-only before this epoch, unlabelled-only after");
    train->add_option("--resume", tf.resume, "checkpoint to resume from");
    train->add_option("--out", tf.out_dir, "output directory")->required();

    TransferFlags xf;
    auto* transfer = app.add_subcommand("transfer", "apply a pose to an identity mesh");
    transfer->add_option("--checkpoint", xf.checkpoint, "trained checkpoint")->required();
    transfer->add_option("--pose-mesh", xf.pose_path, "pose source mesh")->required();
    transfer->add_option("--id-mesh", xf.id_path, "identity source mesh")->required();
    transfer->add_option("--out", xf.out_path, "output mesh path (.obj or .ply)")->required();
    transfer->add_flag("--emit-warped", xf.emit_warped, "also write the warped intermediate");
    transfer->add_option("--dims-scale", xf.dims_scale, "width divisor: 1, 4 or 8");
    transfer->add_flag("--no-disentangle", xf.no_disentangle, "style refinement from the pose channels instead of the identity channels");
    transfer->add_option("--epsilon", xf.epsilon, "Sinkhorn regularization");
    transfer->add_option("--iterations", xf.iterations, "Sinkhorn iterations");

    EvalFlags ef;
    auto* eval = app.add_subcommand("eval", "evaluate transfer quality on labelled pairs");
    eval->add_option("--checkpoint", ef.checkpoint, "trained checkpoint")->required();
    eval->add_option("--manifest", ef.manifest_path, "dataset manifest")->required();
    eval->add_option("--out", ef.out_csv, "output CSV path")->required();
    eval->add_option("--n-pairs", ef.n_pairs, "number of evaluation pairs");
    eval->add_flag("--strict", ef.strict, "fail when a pair has no ground truth");
    eval->add_option("--dims-scale", ef.dims_scale, "width divisor: 1, 4 or 8");
    eval->add_flag("--no-disentangle", ef.no_disentangle, "style refinement from the pose channels instead of the identity channels");
    eval->add_option("--epsilon", ef.epsilon, "Sinkhorn regularization");
    eval->add_option("--iterations", ef.iterations, "Sinkhorn iterations");
    eval->add_option("--seed", ef.seed, "evaluation seed (default 9001 or MAPCON_SEED)");

    GradcheckFlags gf;
    auto* grad = app.add_subcommand("gradcheck", "verify analytic gradients by finite differences");
    grad->add_option("--which", gf.which, "losses|ops|all")
        ->check(CLI::IsMember({"losses", "ops", "all"}));
    grad->add_option("--tol", gf.tol, "max relative error tolerance");
    grad->add_option("--seed", gf.seed, "base point seed");
    grad->add_option("--corrupt", gf.corrupt,
                     "inject a gradient fault into the named case (harness self-test)");

    std::string config_path;
    for (auto* sub : {gen, train, transfer, eval, grad})
        sub->add_option("--config", config_path, "key=value config file (flags take precedence)");

    // assemble argv with config-file values inserted before explicit flags
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        for (size_t i = 0; i < args.size(); ++i) {
            std::string path;
            if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
            else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
            if (path.empty()) continue;
            std::vector<std::string> injected = load_config_args(path);
            args.insert(args.begin() + 1, injected.begin(), injected.end());
            break;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kFailure;
    }

    try {
        std::vector<const char*> cargs;
        cargs.push_back(argv[0]);
        for (const auto& a : args) cargs.push_back(a.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gd);
        if (train->parsed()) return cmd_train(tf);
        if (transfer->parsed()) return cmd_transfer(xf);
        if (eval->parsed()) return cmd_eval(ef);
        if (grad->parsed()) return cmd_gradcheck(gf);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kFailure;
    }
    return kUsage;
}

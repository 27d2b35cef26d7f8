#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mapcon/losses.hpp"
#include "mapcon/mesh.hpp"
#include "mapcon/metrics.hpp"
#include "mapcon/network.hpp"
#include "mapcon/optim.hpp"
#include "mapcon/synthetic.hpp"

namespace mapcon {

enum class TrainMode { Supervised, Unsupervised, Semi };

// thrown when a training step produces a non-finite loss
struct NonFiniteError : TensorError {
    using TensorError::TensorError;
};

const char* mode_name(TrainMode mode);
TrainMode parse_mode(const std::string& name);

struct TrainingConfig {
    TrainMode mode = TrainMode::Supervised;
    size_t epochs = 200;
    size_t batch_size = 2;
    float lr0 = 1e-4f;
    LossWeights<float> weights;
    SinkhornConfig sinkhorn;
    ModelDims dims = ModelDims{};
    uint64_t seed_init = 1;
    uint64_t seed_shuffle = 2;
    uint64_t seed_reorder = 3;
    std::string checkpoint_path;
    std::string log_path;
    size_t checkpoint_interval = 0; // in epochs; 0 means final checkpoint only
    size_t stage_switch_epoch = 0;  // semi mode: labelled-only before, unlabelled-only after
};

// lr0 for the first half of training, then linear decay to 0.
float lr_at(size_t step, size_t total_steps, float lr0);

struct StepRecord {
    size_t epoch = 0;
    size_t iter = 0;
    char mode = 'L';
    float lr = 0;
    float l_rec = 0;
    float l_edge = 0;
    float l_mesh_cc = 0;
    float l_mesh_ss = 0;
    float l_point = 0;
    float total = 0;
};

std::string log_preamble(const TrainingConfig& cfg);
std::string log_header();
std::string log_line(const StepRecord& rec);

struct WorkItem {
    char tag = 'L';   // 'L' labelled or 'U' unlabelled iteration
    int ucase = -1;   // sampling case for unlabelled iterations, n_U mod 3
};

// Unrolls the labelled/unlabelled alternation for one training run.
// With no unlabelled data the schedule degenerates to all-labelled.
std::vector<WorkItem> semi_schedule(size_t n_steps, size_t n_labelled, size_t n_unlabelled,
                                    size_t steps_per_epoch, size_t stage_switch_epoch);

// In-memory dataset with an access audit on ground-truth reads.
class Dataset {
public:
    explicit Dataset(const DatasetManifest& manifest);

    const std::vector<std::string>& labelled_ids() const { return lab_ids_; }
    const std::vector<std::string>& labelled_poses() const { return lab_poses_; }
    const std::vector<std::string>& unlabelled_ids() const { return unlab_ids_; }
    const std::vector<std::string>& unlabelled_poses() const { return unlab_poses_; }
    size_t labelled_count() const { return n_labelled_; }
    size_t unlabelled_count() const { return n_unlabelled_; }
    size_t total_count() const { return meshes_.size(); }

    bool has(const std::string& identity, const std::string& pose) const;
    const Mesh& mesh(const std::string& identity, const std::string& pose) const;
    // same lookup, but counted: every supervised target must go through here
    const Mesh& ground_truth(const std::string& identity, const std::string& pose) const;
    size_t ground_truth_accesses() const { return gt_accesses_; }

private:
    std::vector<Mesh> meshes_;
    std::unordered_map<std::string, size_t> by_key_;
    std::vector<std::string> lab_ids_, lab_poses_, unlab_ids_, unlab_poses_;
    size_t n_labelled_ = 0, n_unlabelled_ = 0;
    mutable size_t gt_accesses_ = 0;
};

// Checkpoint container: magic MAPC, version, named f32 tensors; Adam moments
// ride along as "/m" and "/v" tensors plus a "__step" scalar.
void save_checkpoint(const ParamStore<float>& params, const AdamState<float>& opt, const std::string& path);
struct Checkpoint {
    ParamStore<float> params;
    AdamState<float> opt;
};
Checkpoint load_checkpoint(const std::string& path);

class Trainer {
public:
    Trainer(TrainingConfig cfg, const DatasetManifest& manifest);

    // resume from a checkpoint written by an earlier run of the same config
    void restore(const Checkpoint& ckpt);

    size_t steps_per_epoch() const { return steps_per_epoch_; }
    size_t total_steps() const { return cfg_.epochs * steps_per_epoch_; }
    size_t current_step() const { return static_cast<size_t>(opt_.step); }

    // one optimizer update; deterministic given (config seeds, step index)
    StepRecord train_step();

    // runs to the configured number of epochs, appending to the log and
    // writing checkpoints; throws TensorError on non-finite losses
    std::vector<StepRecord> run();

    const ParamStore<float>& params() const { return params_; }
    ParamStore<float>& params() { return params_; }
    const AdamState<float>& optimizer() const { return opt_; }
    const Dataset& dataset() const { return data_; }
    const TrainingConfig& config() const { return cfg_; }

private:
    struct SampleLoss {
        Tensor<float> total;
        float l_rec = 0, l_edge = 0, l_mesh_cc = 0, l_mesh_ss = 0, l_point = 0;
    };

    SampleLoss supervised_sample(Tape<float>& tape, const BoundParams<float>& bound,
                                 size_t step, size_t sample);
    SampleLoss unsupervised_sample(Tape<float>& tape, const BoundParams<float>& bound,
                                   size_t step, size_t sample, int ucase);

    TrainingConfig cfg_;
    Dataset data_;
    ParamStore<float> params_;
    AdamState<float> opt_;
    std::vector<WorkItem> schedule_;
    size_t steps_per_epoch_ = 0;
};

// Inference helpers -------------------------------------------------------

struct TransferResult {
    std::vector<float> final_vertices;  // 3 * N_id
    std::vector<float> warped_vertices; // 3 * N_id
};

// Runs the generator on already-preprocessed meshes, no gradients recorded.
TransferResult run_transfer(const ParamStore<float>& params, const ModelDims& dims,
                            const SinkhornConfig& sinkhorn_cfg, const Mesh& pose_mesh,
                            const Mesh& id_mesh);

struct EvalRow {
    std::string pair_id;
    MetricReport report;
    bool has_gt = true;
};

// Fixed-seed evaluation over randomly drawn labelled pairs with exact ground
// truth; returns one row per pair. Pairs whose ground truth is absent from the
// manifest are flagged and reported through `warnings` when given, otherwise
// they raise MeshError.
std::vector<EvalRow> evaluate_model(const ParamStore<float>& params, const ModelDims& dims,
                                    const SinkhornConfig& sinkhorn_cfg, const Dataset& data,
                                    size_t n_pairs, uint64_t eval_seed,
                                    std::vector<std::string>* warnings = nullptr);

double mean_pmd(const std::vector<EvalRow>& rows);

// default evaluation seed; the MAPCON_SEED environment variable overrides it
uint64_t evaluation_seed();

} // namespace mapcon

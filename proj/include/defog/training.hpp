#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "defog/cascade.hpp"
#include "defog/losses.hpp"
#include "defog/networks.hpp"

namespace defog {

// Every training knob, including the ablation switches. Defaults are the
// reference recipe: Adam(0.5, 0.999) at 1e-4, batch 1, cosine decay to zero
// over 200 epochs, resize 512 / crop 256, lambda1=1, lambda2=2.
struct TrainConfig {
    float lr = 1e-4f;
    int batch_size = 1; // only 1 is supported
    int epochs = 200;
    int resize_to = 512;
    int crop_to = 256;
    float lambda1 = 1.0f;
    float lambda2 = 2.0f;
    uint64_t seed = 0;
    int replay_buffer = 50; // for D_X fakes; 0 disables
    PriorWeighting prior_weighting = PriorWeighting::kScore;
    int checkpoint_every = 0; // iterations; 0 = final checkpoint only
    float adam_beta1 = 0.5f;
    float adam_beta2 = 0.999f;

    // architecture / loss ablations
    bool coarse_to_fine = true;
    bool long_range_residual = true;
    UpsampleMode upsample = UpsampleMode::kUim;
    bool use_pgcyc = true;
    bool use_prior_gan = true; // false: unweighted D_Y on both sides
    Role dy_kind = Role::kDiscPixel;
    bool per_stage_weights = false;

    uint64_t perceptual_seed = 73;
    std::string vgg_weights; // archive path; empty = seeded random extractor

    long max_iterations = 0; // 0 = epochs * iterations-per-epoch
    int log_every = 1;

    void validate() const;
    NetworkSpec generator_spec() const;
};

// key = value lines; '#' starts a comment. Unknown keys are an error.
TrainConfig parse_config_file(const std::string& path, TrainConfig base = {});
void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& value);
std::map<std::string, std::string> config_to_map(const TrainConfig& c);

// Cosine annealing: lr * (1 + cos(pi * epoch / epochs)) / 2, pinned exactly
// at the start, midpoint, and end.
double lr_at(const TrainConfig& config, int epoch);

// Adam with bias correction over one ParameterSet.
class Adam {
public:
    void init(const ParameterSet& params);
    void step(ParameterSet& params, float lr, float beta1, float beta2,
              float eps = 1e-8f);

    long t = 0;
    std::vector<ad::TensorT<float>> m, v;
};

// History pool of generated images for discriminator updates: a buffered
// fake replaces the current one with probability 1/2 once the pool is full.
class ReplayBuffer {
public:
    explicit ReplayBuffer(int capacity) : capacity_(capacity) {}

    ad::TensorT<float> query(const ad::TensorT<float>& img, Rng& rng);

    int capacity() const { return capacity_; }
    const std::vector<ad::TensorT<float>>& images() const { return images_; }
    void restore(std::vector<ad::TensorT<float>> images);

private:
    int capacity_;
    std::vector<ad::TensorT<float>> images_;
};

// Full mutable training state; serializable to a single archive and exactly
// restorable (criterion: bit-identical continuation).
struct TrainState {
    TrainConfig config;

    std::vector<Generator> gens_g; // 1 entry, or 3 with per_stage_weights
    std::vector<Generator> gens_f;
    Discriminator disc_x;
    Discriminator disc_y;
    FeatureExtractor extractor;

    std::vector<Adam> opt_gens; // parallel to gens_g then gens_f
    Adam opt_dx, opt_dy;

    ReplayBuffer pool_dx{50};

    long iteration = 0;
    std::vector<std::string> foggy_files, clean_files;
    std::vector<int> order_f, order_c;
    size_t pos_f = 0, pos_c = 0;
    uint64_t shuffles_f = 0, shuffles_c = 0;

    long iters_per_epoch() const;
    int epoch_of(long iter) const { return static_cast<int>(iter / iters_per_epoch()); }
};

TrainState init_train_state(const TrainConfig& config,
                            std::vector<std::string> foggy_files,
                            std::vector<std::string> clean_files);

// One optimization round: a joint G/F step on the cycle, prior-guided,
// perceptual, and adversarial objectives, then D_Y, then D_X. Inputs are
// preprocessed [0,1] crops; prior maps are computed here, from these crops.
LossReport train_step(TrainState& state, const Image& foggy_crop, const Image& clean_crop);

struct RunResult {
    std::string checkpoint_path;
    std::string loss_csv_path;
    std::vector<LossReport> reports;
};

RunResult run_training(const TrainConfig& config, const std::string& foggy_dir,
                       const std::string& clean_dir, const std::string& out_dir,
                       const std::string& resume_from = "");

void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

struct StageImages {
    Image coarse, finer, finest; // all kUnit, finest cropped to input size
};

// pad to a multiple of 16 -> [-1,1] -> cascade -> finest -> crop -> [0,1].
Image infer(const TrainState& state, const Image& foggy);
StageImages infer_stages(const TrainState& state, const Image& foggy);

} // namespace defog

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tadoc/backward_map.hpp"
#include "tadoc/image.hpp"
#include "tadoc/nn.hpp"

namespace tadoc {

struct ModelConfig {
    int t_total = 20;       // T
    int base_channels = 32;
    int n_res_blocks = 4;
    int time_dim = 128;
    int grid_stride = 16;   // fixed by the architecture
    std::array<int, 6> dilation_rates{1, 2, 3, 4, 5, 6};
    double alpha = 1.0;     // flow-loss weight
    double beta = 1.0;      // reconstruction-loss weight
    double lr = 1e-3;       // desk-scale default (full-scale setups run 1e-4)
    double weight_decay = 1e-4;
    int batch_size = 8;
    int epochs = 16;
    std::uint64_t seed = 0;
    int val_count = 16;

    void validate() const;
    std::string to_json() const;  // canonical form: sorted keys, fixed layout
    static ModelConfig from_json(const std::string& text);
};

// TAFE encoder (2 stem convs, time fusion, 4 stride-2 downsamplers to /16,
// residual blocks, second time fusion) followed by the WFP head (6 dilated
// branches, channel concat, 1x1 aggregation, zero-initialized 2-channel
// head). The network predicts displacement from the identity grid, so an
// untrained model outputs the identity map exactly.
class TadocModel {
public:
    explicit TadocModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    std::vector<nn::Tensor<float>>& parameters() { return params_; }
    const std::vector<nn::Tensor<float>>& parameters() const { return params_; }
    std::size_t parameter_count() const;

    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }

    // Sparse absolute map tensor [2, H/16, W/16]; differentiable.
    nn::Tensor<float> forward(const RasterImage& image, const RasterImage& mask, int t) const;

    // Same, evaluated and converted (no gradient use).
    BackwardMap forward_map(const RasterImage& image, const RasterImage& mask, int t) const;

private:
    ModelConfig cfg_;
    nn::Conv2d<float> stem1_, stem2_;
    nn::Linear<float> time_proj1_, time_proj2_;
    struct Down {
        nn::Conv2d<float> conv;
        nn::GroupNorm<float> norm;
    };
    std::vector<Down> downs_;
    std::vector<nn::ResidualBlock<float>> res_blocks_;
    std::vector<nn::Conv2d<float>> wfp_branches_;
    nn::Conv2d<float> wfp_agg_, wfp_head_;
    std::vector<nn::Tensor<float>> params_;
    bool frozen_ = false;

    void collect_params();
};

// Classical mask estimator: luminance Otsu threshold, largest connected
// component, hole fill, 3x3 softening. Never fails; degenerate input gives
// an all-ones mask.
RasterImage estimate_mask(const RasterImage& image);

struct InferResult {
    RasterImage image;
    BackwardMap map;  // dense final map actually used for sampling
};

// Single forward pass at t = T.
InferResult infer_direct(const TadocModel& model, const RasterImage& image,
                         const RasterImage* mask = nullptr);

// Recovers the final map from every t in {1..T} and averages in fixed
// t-order; the per-t forwards may run concurrently and the result is
// bit-identical either way.
InferResult infer_average(const TadocModel& model, const RasterImage& image,
                          const RasterImage* mask = nullptr, bool parallel = true);

// Checkpoint container: TAPW parameter block followed by u32 length +
// canonical ModelConfig JSON.
void save_checkpoint(const TadocModel& model, const std::string& path);
TadocModel load_checkpoint(const std::string& path);

}  // namespace tadoc

#pragma once

#include <string>
#include <vector>

#include "tadoc/dataset.hpp"
#include "tadoc/metrics.hpp"
#include "tadoc/model.hpp"

namespace tadoc {

struct LossParts {
    nn::Tensor<float> total;  // scalar, differentiable
    double flow = 0;          // alpha-weighted component values for logging
    double rec = 0;
};

// L = alpha * mean_cells |fhat_t - f_t|_1 + beta * mean |I_hat - I_gt|,
// with the reconstruction built by recovering fhat_T = (T/t) fhat_t +
// (1 - T/t) f_0, upsampling it densely and sampling the distorted image
// through it. Gradients flow through recovery, upsampling and sampling.
LossParts compute_loss(const nn::Tensor<float>& fhat_t, const nn::Tensor<float>& f_t,
                       const nn::Tensor<float>& distorted_chw,
                       const nn::Tensor<float>& flat_chw, int t, int t_total, double alpha,
                       double beta);

// Average-pool a dense map to the sparse grid as a [2,h,w] tensor.
nn::Tensor<float> pool_map_to_sparse(const BackwardMap& dense, int grid_stride);

nn::Tensor<float> raster_to_chw_tensor(const RasterImage& img);

struct EpochLog {
    int epoch = 0;
    double loss_flow = 0, loss_rec = 0;
    double val_msssim = 0, val_ad = 0, val_ld = 0;
};

struct TrainResult {
    std::string checkpoint_path;
    std::string log_path;
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_val_ad = 0;
};

// Algorithm: per visited sample draw t ~ Uniform{1..T}, feed the ground-truth
// mask with probability 0.5 (else the classical estimate), accumulate AdamW
// steps per batch; per epoch, log train losses and held-out metrics; the
// checkpoint keeps the best-validation-AD parameters.
TrainResult train(TadocModel& model, const std::string& manifest_path,
                  const std::string& out_dir);

// Shared by cmd_eval and the benchmarks: dewarp every sample (direct or
// average mode) and fill the metric report. The identity baseline is
// obtained by passing a frozen zero-head model.
MetricReport evaluate_model(const TadocModel& model, const std::string& manifest_path,
                            bool average_mode, bool with_dls = true);

}  // namespace tadoc

#include "tadoc/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "tadoc/errors.hpp"
#include "tadoc/rng.hpp"

namespace tadoc {

using ad::Tensor;

namespace fs = std::filesystem;

Tensor<float> raster_to_chw_tensor(const RasterImage& img) {
    const int H = img.height(), W = img.width(), C = img.channels();
    std::vector<float> v(static_cast<std::size_t>(C) * H * W);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                v[(static_cast<std::size_t>(c) * H + y) * W + x] = img.at(y, x, c);
    return Tensor<float>::from({C, H, W}, std::move(v));
}

nn::Tensor<float> pool_map_to_sparse(const BackwardMap& dense, int grid_stride) {
    const int h = dense.height() / grid_stride, w = dense.width() / grid_stride;
    std::vector<float> v(static_cast<std::size_t>(2) * h * w, 0.0f);
    const double inv = 1.0 / (grid_stride * grid_stride);
    for (int gy = 0; gy < h; ++gy)
        for (int gx = 0; gx < w; ++gx) {
            double su = 0, sv = 0;
            for (int y = 0; y < grid_stride; ++y)
                for (int x = 0; x < grid_stride; ++x) {
                    const MapCoord& c = dense.at(gy * grid_stride + y, gx * grid_stride + x);
                    su += c.u;
                    sv += c.v;
                }
            v[static_cast<std::size_t>(gy) * w + gx] = static_cast<float>(su * inv);
            v[static_cast<std::size_t>(h) * w + static_cast<std::size_t>(gy) * w + gx] =
                static_cast<float>(sv * inv);
        }
    return Tensor<float>::from({2, h, w}, std::move(v));
}

namespace {

Tensor<float> sparse_identity_tensor(int h, int w) {
    std::vector<float> v(static_cast<std::size_t>(2) * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            v[static_cast<std::size_t>(y) * w + x] = static_cast<float>((x + 0.5) / w);
            v[static_cast<std::size_t>(h) * w + static_cast<std::size_t>(y) * w + x] =
                static_cast<float>((y + 0.5) / h);
        }
    return Tensor<float>::from({2, h, w}, std::move(v));
}

}  // namespace

LossParts compute_loss(const Tensor<float>& fhat_t, const Tensor<float>& f_t,
                       const Tensor<float>& distorted_chw, const Tensor<float>& flat_chw,
                       int t, int t_total, double alpha, double beta) {
    if (fhat_t.shape() != f_t.shape())
        throw std::invalid_argument("compute_loss: sparse map shape mismatch");
    if (t < 1 || t > t_total) throw std::invalid_argument("compute_loss: t outside [1, T]");
    const int h = fhat_t.shape()[1], w = fhat_t.shape()[2];
    const int H = distorted_chw.shape()[1], W = distorted_chw.shape()[2];

    // per-cell L1: |du| + |dv| averaged over cells
    Tensor<float> flow = ad::mul_scalar(ad::sum_abs_diff(fhat_t, f_t),
                                        static_cast<float>(1.0 / (h * w)));

    LossParts parts;
    parts.flow = flow.item();

    Tensor<float> total = ad::mul_scalar(flow, static_cast<float>(alpha));
    if (beta > 0) {
        float ratio = static_cast<float>(static_cast<double>(t_total) / t);
        Tensor<float> fhat_T =
            ad::axpby(ratio, fhat_t, 1.0f - ratio, sparse_identity_tensor(h, w));
        Tensor<float> dense = ad::upsample_bilinear(fhat_T, H, W);
        Tensor<float> rebuilt = ad::grid_sample(distorted_chw, dense);
        Tensor<float> rec = ad::mul_scalar(ad::sum_abs_diff(rebuilt, flat_chw),
                                           static_cast<float>(1.0 / flat_chw.numel()));
        parts.rec = rec.item();
        total = ad::add(total, ad::mul_scalar(rec, static_cast<float>(beta)));
    }
    parts.total = total;
    return parts;
}

namespace {

struct PreparedSample {
    std::string id;
    RasterImage distorted, flat, gt_mask, est_mask;
    BackwardMap gt_map;
    Tensor<float> distorted_chw, flat_chw;
};

PreparedSample prepare(const std::string& dir, const ManifestEntry& e) {
    DocumentSample s = load_sample(dir, e);
    PreparedSample p;
    p.id = e.id;
    p.distorted = std::move(s.distorted);
    p.flat = std::move(s.flat);
    p.gt_mask = std::move(s.mask);
    p.est_mask = estimate_mask(p.distorted);
    p.gt_map = std::move(s.gt_map);
    p.distorted_chw = raster_to_chw_tensor(p.distorted);
    p.flat_chw = raster_to_chw_tensor(p.flat);
    return p;
}

}  // namespace

TrainResult train(TadocModel& model, const std::string& manifest_path,
                  const std::string& out_dir) {
    const ModelConfig& cfg = model.config();
    cfg.validate();
    fs::create_directories(out_dir);

    auto entries = load_manifest(manifest_path);
    if (entries.empty()) throw std::invalid_argument("train: empty manifest " + manifest_path);
    std::string data_dir = fs::path(manifest_path).parent_path().string();

    // val_count = 0 trains on everything and keeps the final parameters
    int val_count = std::min<int>(cfg.val_count, static_cast<int>(entries.size()) / 4);
    std::size_t train_count = entries.size() - static_cast<std::size_t>(val_count);

    std::vector<PreparedSample> train_set, val_set;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto p = prepare(data_dir, entries[i]);
        if (i < train_count)
            train_set.push_back(std::move(p));
        else
            val_set.push_back(std::move(p));
    }

    Rng rng(Rng::mix(cfg.seed, 0x74726169));
    nn::AdamW<float> opt(cfg.lr, cfg.weight_decay);
    auto& params = model.parameters();

    const int T = cfg.t_total;
    const int stride = cfg.grid_stride;

    TrainResult result;
    std::vector<std::vector<float>> best_params;
    double best_ad = std::numeric_limits<double>::infinity();

    auto validate = [&](EpochLog& log, int epoch) {
        if (val_set.empty()) return;
        for (const auto& p : params)
            for (float v : p.value())
                if (!std::isfinite(v))
                    throw TrainingDiverged("non-finite parameter " + p.name() +
                                           " entering validation at epoch " +
                                           std::to_string(epoch));
        model.set_frozen(true);
        double ssim_sum = 0, ad_sum = 0, ld_sum = 0;
        int ad_n = 0;
        for (const auto& v : val_set) {
            InferResult r = infer_direct(model, v.distorted, &v.gt_mask);
            ssim_sum += ms_ssim(r.image, v.flat);
            ld_sum += ld_oracle(r.map, v.gt_map, v.flat.height(), v.flat.width());
            auto ad = ad_oracle(r.map, v.gt_map, v.flat, v.flat.height(), v.flat.width());
            if (ad) {
                ad_sum += *ad;
                ++ad_n;
            }
        }
        model.set_frozen(false);
        log.val_msssim = ssim_sum / val_set.size();
        log.val_ld = ld_sum / val_set.size();
        log.val_ad = ad_n ? ad_sum / ad_n : std::numeric_limits<double>::infinity();
    };

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the run's own stream
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<int>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double flow_sum = 0, rec_sum = 0;
        std::size_t done = 0;
        while (done < order.size()) {
            std::size_t batch = std::min<std::size_t>(cfg.batch_size, order.size() - done);
            nn::zero_grads(params);
            for (std::size_t k = 0; k < batch; ++k) {
                const PreparedSample& s = train_set[order[done + k]];
                int t = rng.uniform_int(1, T);
                const RasterImage& mask = rng.bernoulli(0.5) ? s.gt_mask : s.est_mask;

                Tensor<float> fhat = model.forward(s.distorted, mask, t);
                BackwardMap f_t_dense = interpolate_map(s.gt_map, {t, T});
                Tensor<float> f_t = pool_map_to_sparse(f_t_dense, stride);

                LossParts parts = compute_loss(fhat, f_t, s.distorted_chw, s.flat_chw, t, T,
                                               cfg.alpha, cfg.beta);
                double val = parts.total.item();
                if (!std::isfinite(val))
                    throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) +
                                           ", sample " + s.id + " (flow=" +
                                           std::to_string(parts.flow) + ", rec=" +
                                           std::to_string(parts.rec) + ")");
                flow_sum += parts.flow;
                rec_sum += parts.rec;
                Tensor<float> scaled =
                    ad::mul_scalar(parts.total, static_cast<float>(1.0 / batch));
                scaled.backward();
            }
            opt.step(params);
            done += batch;
        }

        EpochLog log;
        log.epoch = epoch;
        log.loss_flow = flow_sum / static_cast<double>(order.size());
        log.loss_rec = rec_sum / static_cast<double>(order.size());
        validate(log, epoch);
        result.log.push_back(log);

        if (!val_set.empty() && log.val_ad < best_ad) {
            best_ad = log.val_ad;
            result.best_epoch = epoch;
            best_params.clear();
            for (const auto& p : params) best_params.push_back(p.value());
        }
    }

    if (!best_params.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i].value() = best_params[i];
        result.best_val_ad = best_ad;
    }
    model.set_frozen(true);

    result.checkpoint_path = (fs::path(out_dir) / "model.tapw").string();
    save_checkpoint(model, result.checkpoint_path);

    result.log_path = (fs::path(out_dir) / "train_log.csv").string();
    std::ofstream f(result.log_path);
    if (!f) throw std::runtime_error("cannot open for write: " + result.log_path);
    f << "epoch,loss_flow,loss_rec,val_msssim,val_ad_oracle,val_ld_oracle\n";
    for (const auto& l : result.log)
        f << l.epoch << "," << l.loss_flow << "," << l.loss_rec << "," << l.val_msssim << ","
          << l.val_ad << "," << l.val_ld << "\n";
    return result;
}

MetricReport evaluate_model(const TadocModel& model, const std::string& manifest_path,
                            bool average_mode, bool with_dls) {
    auto entries = load_manifest(manifest_path);
    std::string dir = fs::path(manifest_path).parent_path().string();

    MetricReport report;
    report.skip_reasons["ed"] = "no OCR hypothesis available";
    report.skip_reasons["cer"] = "no OCR hypothesis available";
    for (const auto& e : entries) {
        DocumentSample s = load_sample(dir, e);
        InferResult r = average_mode ? infer_average(model, s.distorted, &s.mask)
                                     : infer_direct(model, s.distorted, &s.mask);
        SampleMetrics m;
        m.id = e.id;
        m.msssim = ms_ssim(r.image, s.flat);
        m.ld = ld_oracle(r.map, s.gt_map, s.flat.height(), s.flat.width());
        m.ad = ad_oracle(r.map, s.gt_map, s.flat, s.flat.height(), s.flat.width());
        if (!m.ad) report.skip_reasons["ad_oracle"] = "degenerate alignment fit";
        if (with_dls) {
            auto ref = toy_layout_detect(s.flat);
            auto test = toy_layout_detect(r.image);
            m.dls_value = dls(ref, test);
            if (!m.dls_value) report.skip_reasons["dls"] = "no confident regions on either side";
        }
        report.samples.push_back(std::move(m));
    }
    report.finalize();
    return report;
}

}  // namespace tadoc

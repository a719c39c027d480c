#include "tadoc/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "tadoc/errors.hpp"
#include "tadoc/parallel.hpp"
#include "tadoc/rng.hpp"
#include "tadoc/segment.hpp"

namespace tadoc {

using ad::Tensor;

void ModelConfig::validate() const {
    if (t_total < 1) throw std::invalid_argument("config: T must be >= 1");
    if (base_channels < 8 || base_channels % 8 != 0)
        throw std::invalid_argument("config: base_channels must be a positive multiple of 8");
    if (n_res_blocks < 1) throw std::invalid_argument("config: n_res_blocks must be >= 1");
    if (time_dim < 2 || time_dim % 2 != 0)
        throw std::invalid_argument("config: time_dim must be even");
    if (grid_stride != 16) throw std::invalid_argument("config: grid_stride is fixed at 16");
    if (alpha < 0 || beta < 0) throw std::invalid_argument("config: loss weights must be >= 0");
    if (lr <= 0) throw std::invalid_argument("config: lr must be positive");
    if (weight_decay < 0) throw std::invalid_argument("config: weight_decay must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
    if (val_count < 0) throw std::invalid_argument("config: val_count must be >= 0");
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;  // nlohmann::json orders keys lexicographically
    j["alpha"] = alpha;
    j["base_channels"] = base_channels;
    j["batch_size"] = batch_size;
    j["beta"] = beta;
    j["dilation_rates"] = dilation_rates;
    j["epochs"] = epochs;
    j["grid_stride"] = grid_stride;
    j["lr"] = lr;
    j["n_res_blocks"] = n_res_blocks;
    j["seed"] = seed;
    j["t_total"] = t_total;
    j["time_dim"] = time_dim;
    j["val_count"] = val_count;
    j["weight_decay"] = weight_decay;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig c;
    c.alpha = j.at("alpha").get<double>();
    c.base_channels = j.at("base_channels").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.beta = j.at("beta").get<double>();
    auto rates = j.at("dilation_rates").get<std::vector<int>>();
    if (rates.size() != 6) throw std::invalid_argument("config: need 6 dilation rates");
    std::copy(rates.begin(), rates.end(), c.dilation_rates.begin());
    c.epochs = j.at("epochs").get<int>();
    c.grid_stride = j.at("grid_stride").get<int>();
    c.lr = j.at("lr").get<double>();
    c.n_res_blocks = j.at("n_res_blocks").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.t_total = j.at("t_total").get<int>();
    c.time_dim = j.at("time_dim").get<int>();
    c.val_count = j.at("val_count").get<int>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.validate();
    return c;
}

namespace {

// channel plan: stem at base/2, then base, 1.5*base, 2.5*base, 2.5*base
struct ChannelPlan {
    int stem, d1, d2, d3, d4;
};

ChannelPlan plan_channels(int base) {
    return {base / 2, base, base * 3 / 2, base * 5 / 2, base * 5 / 2};
}

int norm_groups(int channels) { return channels % 8 == 0 ? 8 : 1; }

}  // namespace

TadocModel::TadocModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    ChannelPlan ch = plan_channels(cfg_.base_channels);
    Rng rng(Rng::mix(cfg_.seed, 0x74616470));

    stem1_ = nn::Conv2d<float>(4, ch.stem, 3, 1, 1, 1, rng, "tafe.stem1");
    stem2_ = nn::Conv2d<float>(ch.stem, ch.stem, 3, 1, 1, 1, rng, "tafe.stem2");
    time_proj1_ = nn::Linear<float>(cfg_.time_dim, ch.stem, rng, "tafe.time1");

    int chans[5] = {ch.stem, ch.d1, ch.d2, ch.d3, ch.d4};
    for (int i = 0; i < 4; ++i) {
        Down d;
        std::string name = "tafe.down" + std::to_string(i + 1);
        d.conv = nn::Conv2d<float>(chans[i], chans[i + 1], 3, 2, 1, 1, rng, name + ".conv");
        d.norm = nn::GroupNorm<float>(chans[i + 1], norm_groups(chans[i + 1]), name + ".norm");
        downs_.push_back(std::move(d));
    }
    for (int i = 0; i < cfg_.n_res_blocks; ++i)
        res_blocks_.emplace_back(ch.d4, ch.d4, norm_groups(ch.d4), rng,
                                 "tafe.res" + std::to_string(i + 1));
    time_proj2_ = nn::Linear<float>(cfg_.time_dim, ch.d4, rng, "tafe.time2");

    int branch_ch = cfg_.base_channels;
    for (int i = 0; i < 6; ++i) {
        int d = cfg_.dilation_rates[static_cast<std::size_t>(i)];
        wfp_branches_.push_back(nn::Conv2d<float>(ch.d4, branch_ch, 3, 1, d, d, rng,
                                                  "wfp.branch" + std::to_string(i + 1)));
    }
    wfp_agg_ = nn::Conv2d<float>(branch_ch * 6, ch.d4, 1, 1, 1, 0, rng, "wfp.agg");
    wfp_head_ = nn::Conv2d<float>(ch.d4, 2, 3, 1, 1, 1, rng, "wfp.head");
    // zero head: the residual parameterization starts at the identity map
    std::fill(wfp_head_.weight.value().begin(), wfp_head_.weight.value().end(), 0.0f);
    std::fill(wfp_head_.bias.value().begin(), wfp_head_.bias.value().end(), 0.0f);

    collect_params();
}

void TadocModel::collect_params() {
    params_.clear();
    auto add_conv = [&](nn::Conv2d<float>& c) {
        params_.push_back(c.weight);
        params_.push_back(c.bias);
    };
    auto add_norm = [&](nn::GroupNorm<float>& n) {
        params_.push_back(n.gamma);
        params_.push_back(n.beta);
    };
    add_conv(stem1_);
    add_conv(stem2_);
    params_.push_back(time_proj1_.weight);
    params_.push_back(time_proj1_.bias);
    for (auto& d : downs_) {
        add_conv(d.conv);
        add_norm(d.norm);
    }
    for (auto& r : res_blocks_) {
        add_norm(r.n1);
        add_conv(r.c1);
        add_norm(r.n2);
        add_conv(r.c2);
        if (r.skip) add_conv(*r.skip);
    }
    params_.push_back(time_proj2_.weight);
    params_.push_back(time_proj2_.bias);
    for (auto& b : wfp_branches_) add_conv(b);
    add_conv(wfp_agg_);
    add_conv(wfp_head_);
}

std::size_t TadocModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
}

namespace {

Tensor<float> image_to_chw(const RasterImage& image, const RasterImage& mask) {
    const int H = image.height(), W = image.width();
    std::vector<float> v(static_cast<std::size_t>(4) * H * W);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                v[(static_cast<std::size_t>(c) * H + y) * W + x] = image.at(y, x, c);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            v[(static_cast<std::size_t>(3) * H + y) * W + x] = mask.at(y, x, 0);
    return Tensor<float>::from({4, H, W}, std::move(v));
}

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

Tensor<float> TadocModel::forward(const RasterImage& image, const RasterImage& mask,
                                  int t) const {
    if (t < 1 || t > cfg_.t_total)
        throw std::invalid_argument("forward: t=" + std::to_string(t) + " outside [1, " +
                                    std::to_string(cfg_.t_total) + "]");
    const int H = image.height(), W = image.width();
    if (H % cfg_.grid_stride != 0 || W % cfg_.grid_stride != 0)
        throw std::invalid_argument("forward: dims must be divisible by " +
                                    std::to_string(cfg_.grid_stride));
    if (image.channels() != 3) throw std::invalid_argument("forward: RGB input expected");
    if (mask.height() != H || mask.width() != W || mask.channels() != 1)
        throw std::invalid_argument("forward: mask shape mismatch");

    double t_scaled = static_cast<double>(t) * 1000.0 / cfg_.t_total;
    Tensor<float> temb = nn::sinusoidal_embedding<float>(t_scaled, cfg_.time_dim);

    Tensor<float> x = image_to_chw(image, mask);
    x = ad::relu(stem1_(x));
    x = ad::relu(stem2_(x));
    x = ad::add_channel(x, time_proj1_(temb));
    for (const auto& d : downs_) x = ad::relu(d.norm(d.conv(x)));
    for (const auto& r : res_blocks_) x = r(x);
    x = ad::add_channel(x, time_proj2_(temb));

    std::vector<Tensor<float>> branches;
    branches.reserve(wfp_branches_.size());
    for (const auto& b : wfp_branches_) branches.push_back(ad::relu(b(x)));
    Tensor<float> z = ad::relu(wfp_agg_(ad::concat_channels(branches)));
    Tensor<float> disp = wfp_head_(z);
    return ad::add(disp, sparse_identity_tensor(H / cfg_.grid_stride, W / cfg_.grid_stride));
}

BackwardMap TadocModel::forward_map(const RasterImage& image, const RasterImage& mask,
                                    int t) const {
    Tensor<float> s = forward(image, mask, t);
    int h = s.shape()[1], w = s.shape()[2];
    BackwardMap m(h, w);
    const float* v = s.value().data();
    std::size_t cells = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < cells; ++i) m.data()[i] = {v[i], v[cells + i]};
    return m;
}

RasterImage estimate_mask(const RasterImage& image) {
    RasterImage gray = to_gray(image);
    const int H = gray.height(), W = gray.width();
    float thr = otsu_threshold(gray);
    auto bright = threshold_above(gray, thr);
    std::size_t on = 0;
    for (auto v : bright) on += v;
    if (on == 0) return RasterImage(H, W, 1, 1.0f);
    keep_largest_component(bright, H, W);
    fill_holes(bright, H, W);
    return mask_to_soft_image(bright, H, W);
}

namespace {

BackwardMap tensor_to_map(const Tensor<float>& s) {
    int h = s.shape()[1], w = s.shape()[2];
    BackwardMap m(h, w);
    const float* v = s.value().data();
    std::size_t cells = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < cells; ++i) m.data()[i] = {v[i], v[cells + i]};
    return m;
}

void clamp_for_sampling(BackwardMap& m) {
    for (std::size_t i = 0; i < m.cells(); ++i) {
        m.data()[i].u = std::clamp(m.data()[i].u, -0.25, 1.25);
        m.data()[i].v = std::clamp(m.data()[i].v, -0.25, 1.25);
    }
}

}  // namespace

InferResult infer_direct(const TadocModel& model, const RasterImage& image,
                         const RasterImage* mask) {
    if (!model.frozen())
        throw std::invalid_argument("infer_direct: model is not trained (frozen=false)");
    RasterImage m = mask ? *mask : estimate_mask(image);
    BackwardMap sparse = model.forward_map(image, m, model.config().t_total);
    BackwardMap dense = upsample_map_bilinear(sparse, image.height(), image.width());
    clamp_for_sampling(dense);
    InferResult r;
    r.image = sample_bilinear(image, dense);
    r.map = std::move(dense);
    return r;
}

InferResult infer_average(const TadocModel& model, const RasterImage& image,
                          const RasterImage* mask, bool parallel) {
    if (!model.frozen())
        throw std::invalid_argument("infer_average: model is not trained (frozen=false)");
    const int T = model.config().t_total;
    RasterImage m = mask ? *mask : estimate_mask(image);

    std::vector<BackwardMap> recovered(static_cast<std::size_t>(T));
    auto run_t = [&](int t) {
        BackwardMap sparse = model.forward_map(image, m, t);
        recovered[static_cast<std::size_t>(t - 1)] = recover_final(sparse, {t, T});
    };
    if (parallel && T > 1) {
        // dedicate threads to whole timesteps; the reduction below stays in
        // fixed t-order, so the result matches the sequential path bit for bit
        int workers = std::min(thread_count(), T);
        ThreadCountGuard inner(1);
        std::vector<std::thread> pool;
        std::atomic<int> next{1};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int t = next.fetch_add(1); t <= T; t = next.fetch_add(1)) run_t(t);
            });
        for (auto& th : pool) th.join();
    } else {
        for (int t = 1; t <= T; ++t) run_t(t);
    }

    BackwardMap avg_sparse = average_final(recovered);
    BackwardMap dense = upsample_map_bilinear(avg_sparse, image.height(), image.width());
    clamp_for_sampling(dense);
    InferResult r;
    r.image = sample_bilinear(image, dense);
    r.map = std::move(dense);
    return r;
}

void save_checkpoint(const TadocModel& model, const std::string& path) {
    std::vector<nn::NamedParam> params;
    for (const auto& p : model.parameters()) {
        nn::NamedParam np;
        np.name = p.name();
        np.shape = p.shape();
        np.values = p.value();
        params.push_back(std::move(np));
    }
    auto bytes = nn::encode_tapw(params);
    std::string json = model.config().to_json();
    std::uint32_t len = static_cast<std::uint32_t>(json.size());
    for (int i = 0; i < 4; ++i)
        bytes.push_back(static_cast<std::uint8_t>((len >> (8 * i)) & 0xff));
    bytes.insert(bytes.end(), json.begin(), json.end());

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

TadocModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    std::size_t consumed = 0;
    auto params = nn::decode_tapw(bytes.data(), bytes.size(), &consumed);
    if (bytes.size() - consumed < 4) throw ParseError("checkpoint: missing config block", consumed);
    std::uint32_t len = static_cast<std::uint32_t>(bytes[consumed]) |
                        (static_cast<std::uint32_t>(bytes[consumed + 1]) << 8) |
                        (static_cast<std::uint32_t>(bytes[consumed + 2]) << 16) |
                        (static_cast<std::uint32_t>(bytes[consumed + 3]) << 24);
    consumed += 4;
    if (bytes.size() - consumed < len) throw ParseError("checkpoint: truncated config", consumed);
    std::string json(reinterpret_cast<const char*>(bytes.data() + consumed), len);

    TadocModel model(ModelConfig::from_json(json));
    std::map<std::string, nn::NamedParam*> by_name;
    for (auto& p : params) by_name[p.name] = &p;
    for (auto& p : model.parameters()) {
        auto it = by_name.find(p.name());
        if (it == by_name.end())
            throw std::runtime_error("checkpoint: missing parameter " + p.name());
        if (it->second->shape != p.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + p.name());
        p.value() = it->second->values;
    }
    model.set_frozen(true);
    return model;
}

}  // namespace tadoc

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "tadoc/dataset.hpp"
#include "tadoc/errors.hpp"
#include "tadoc/image_io.hpp"
#include "tadoc/metrics.hpp"
#include "tadoc/model.hpp"
#include "tadoc/synth.hpp"
#include "tadoc/train.hpp"

namespace fs = std::filesystem;
using namespace tadoc;

namespace {

// key=value config file; '#' starts a comment; unknown keys are rejected.
std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config file not found: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected key = value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

struct RunConfig {
    ModelConfig model;
    PageSpec page;
    WarpRanges warp;
    double dls_conf_threshold = 0.5;

    void apply(const std::map<std::string, std::string>& kv) {
        std::set<std::string> known;
        auto bind_int = [&](const std::string& k, int& target) {
            known.insert(k);
            auto it = kv.find(k);
            if (it != kv.end()) target = std::stoi(it->second);
        };
        auto bind_double = [&](const std::string& k, double& target) {
            known.insert(k);
            auto it = kv.find(k);
            if (it != kv.end()) target = std::stod(it->second);
        };
        auto bind_u64 = [&](const std::string& k, std::uint64_t& target) {
            known.insert(k);
            auto it = kv.find(k);
            if (it != kv.end()) target = std::stoull(it->second);
        };
        bind_int("model.t_total", model.t_total);
        bind_int("model.base_channels", model.base_channels);
        bind_int("model.n_res_blocks", model.n_res_blocks);
        bind_int("model.time_dim", model.time_dim);
        bind_double("model.alpha", model.alpha);
        bind_double("model.beta", model.beta);
        bind_double("model.lr", model.lr);
        bind_double("model.weight_decay", model.weight_decay);
        bind_int("model.batch_size", model.batch_size);
        bind_int("model.epochs", model.epochs);
        bind_u64("model.seed", model.seed);
        bind_int("model.val_count", model.val_count);
        bind_int("page.height", page.height);
        bind_int("page.width", page.width);
        bind_double("page.margin", page.margin);
        bind_double("page.title_prob", page.title_prob);
        bind_double("page.figure_prob", page.figure_prob);
        bind_int("page.max_figures", page.max_figures);
        bind_double("warp.rotation_max", warp.rotation_max);
        bind_double("warp.perspective_max", warp.perspective_max);
        bind_double("warp.scale_min", warp.scale_min);
        bind_double("warp.scale_max", warp.scale_max);
        bind_int("warp.bumps_min", warp.bumps_min);
        bind_int("warp.bumps_max", warp.bumps_max);
        bind_double("warp.bump_sigma_min", warp.bump_sigma_min);
        bind_double("warp.bump_sigma_max", warp.bump_sigma_max);
        bind_double("warp.bump_amp_min", warp.bump_amp_min);
        bind_double("warp.bump_amp_max", warp.bump_amp_max);
        bind_int("warp.folds_min", warp.folds_min);
        bind_int("warp.folds_max", warp.folds_max);
        bind_double("warp.fold_amp_min", warp.fold_amp_min);
        bind_double("warp.fold_amp_max", warp.fold_amp_max);
        bind_double("warp.fold_falloff_min", warp.fold_falloff_min);
        bind_double("warp.fold_falloff_max", warp.fold_falloff_max);
        bind_double("metric.dls_conf_threshold", dls_conf_threshold);
        for (const auto& [k, v] : kv)
            if (!known.count(k)) throw std::invalid_argument("unknown config key: " + k);
    }

    std::string resolved() const {
        std::ostringstream os;
        os << "model.t_total = " << model.t_total << "\n"
           << "model.base_channels = " << model.base_channels << "\n"
           << "model.n_res_blocks = " << model.n_res_blocks << "\n"
           << "model.time_dim = " << model.time_dim << "\n"
           << "model.alpha = " << model.alpha << "\n"
           << "model.beta = " << model.beta << "\n"
           << "model.lr = " << model.lr << "\n"
           << "model.weight_decay = " << model.weight_decay << "\n"
           << "model.batch_size = " << model.batch_size << "\n"
           << "model.epochs = " << model.epochs << "\n"
           << "model.seed = " << model.seed << "\n"
           << "model.val_count = " << model.val_count << "\n"
           << "page.height = " << page.height << "\n"
           << "page.width = " << page.width << "\n"
           << "page.margin = " << page.margin << "\n"
           << "page.title_prob = " << page.title_prob << "\n"
           << "page.figure_prob = " << page.figure_prob << "\n"
           << "page.max_figures = " << page.max_figures << "\n"
           << "warp.rotation_max = " << warp.rotation_max << "\n"
           << "warp.perspective_max = " << warp.perspective_max << "\n"
           << "warp.scale_min = " << warp.scale_min << "\n"
           << "warp.scale_max = " << warp.scale_max << "\n"
           << "warp.bumps_min = " << warp.bumps_min << "\n"
           << "warp.bumps_max = " << warp.bumps_max << "\n"
           << "warp.bump_sigma_min = " << warp.bump_sigma_min << "\n"
           << "warp.bump_sigma_max = " << warp.bump_sigma_max << "\n"
           << "warp.bump_amp_min = " << warp.bump_amp_min << "\n"
           << "warp.bump_amp_max = " << warp.bump_amp_max << "\n"
           << "warp.folds_min = " << warp.folds_min << "\n"
           << "warp.folds_max = " << warp.folds_max << "\n"
           << "warp.fold_amp_min = " << warp.fold_amp_min << "\n"
           << "warp.fold_amp_max = " << warp.fold_amp_max << "\n"
           << "warp.fold_falloff_min = " << warp.fold_falloff_min << "\n"
           << "warp.fold_falloff_max = " << warp.fold_falloff_max << "\n"
           << "metric.dls_conf_threshold = " << dls_conf_threshold << "\n";
        return os.str();
    }

    void log_resolved(const std::string& out_dir) const {
        std::string text = resolved();
        std::cout << "resolved config:\n" << text;
        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            std::ofstream f(fs::path(out_dir) / "resolved_config.txt");
            f << text;
        }
    }
};

int cmd_synth(int n, const std::string& out, std::uint64_t seed, int size,
              const RunConfig& cfg) {
    RunConfig rc = cfg;
    if (size > 0) rc.page.height = rc.page.width = size;
    rc.log_resolved(out);
    auto manifest = build_dataset(n, out, seed, rc.page, rc.warp);
    std::cout << "manifest: " << manifest << "\n";
    return 0;
}

int cmd_train(const std::string& data, const std::string& out, const RunConfig& cfg) {
    RunConfig rc = cfg;
    rc.log_resolved(out);
    TadocModel model(rc.model);
    std::cout << "parameters: " << model.parameter_count() << "\n";
    auto result = train(model, data, out);
    std::cout << "checkpoint: " << result.checkpoint_path << "\n"
              << "log: " << result.log_path << "\n";
    if (result.best_epoch >= 0)
        std::cout << "best epoch: " << result.best_epoch << " (val AD " << result.best_val_ad
                  << ")\n";
    return 0;
}

int cmd_dewarp(const std::string& model_path, const std::string& input,
               const std::string& mask_path, const std::string& mode, bool sequential,
               const std::string& out) {
    TadocModel model = load_checkpoint(model_path);
    RasterImage img = load_image(input);
    std::optional<RasterImage> mask;
    if (!mask_path.empty()) mask = load_image(mask_path);

    InferResult r;
    if (mode == "direct")
        r = infer_direct(model, img, mask ? &*mask : nullptr);
    else if (mode == "average")
        r = infer_average(model, img, mask ? &*mask : nullptr, !sequential);
    else
        throw std::invalid_argument("mode must be 'direct' or 'average'");

    fs::create_directories(out);
    save_image(r.image, (fs::path(out) / "dewarped.png").string());
    save_bmap(r.map, (fs::path(out) / "map.bmap").string());
    std::cout << "dewarped: " << (fs::path(out) / "dewarped.png").string() << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, bool identity_baseline, const std::string& data,
             const std::string& mode, const std::string& out, const RunConfig& cfg) {
    TadocModel model = [&] {
        if (identity_baseline) {
            ModelConfig mc = cfg.model;
            TadocModel m(mc);  // zero head: dewarps to itself
            m.set_frozen(true);
            return m;
        }
        return load_checkpoint(model_path);
    }();
    auto report = evaluate_model(model, data, mode == "average");
    fs::create_directories(out);
    {
        std::ofstream f(fs::path(out) / "report.csv");
        f << report.to_csv();
    }
    {
        std::ofstream f(fs::path(out) / "report.json");
        f << report.to_json();
    }
    std::cout << "samples: " << report.samples.size() << "\n";
    for (const auto& [k, v] : report.aggregates) std::cout << k << ": " << v << "\n";
    for (const auto& [k, v] : report.skipped)
        std::cout << "skipped " << k << ": " << v << " (" << report.skip_reasons[k] << ")\n";
    return 0;
}

int cmd_metric(const std::string& name, const std::vector<std::string>& files, int out_h,
               int out_w, double threshold) {
    if (name == "msssim") {
        if (files.size() != 2) throw std::invalid_argument("msssim needs two image paths");
        std::cout << ms_ssim(load_image(files[0]), load_image(files[1])) << "\n";
    } else if (name == "ld") {
        if (files.size() != 2) throw std::invalid_argument("ld needs pred.bmap gt.bmap");
        std::cout << ld_oracle(load_bmap(files[0]), load_bmap(files[1]), out_h, out_w) << "\n";
    } else if (name == "ld-reg") {
        if (files.size() != 2) throw std::invalid_argument("ld-reg needs two image paths");
        std::cout << ld_registration(load_image(files[0]), load_image(files[1])) << "\n";
    } else if (name == "ad") {
        if (files.size() != 3)
            throw std::invalid_argument("ad needs pred.bmap gt.bmap flat.png");
        auto v = ad_oracle(load_bmap(files[0]), load_bmap(files[1]), load_image(files[2]),
                           out_h, out_w);
        if (!v) {
            std::cout << "skipped (degenerate fit)\n";
            return 0;
        }
        std::cout << *v << "\n";
    } else if (name == "cer" || name == "ed") {
        if (files.size() != 2) throw std::invalid_argument(name + " needs ref.txt hyp.txt");
        auto slurp = [](const std::string& p) {
            std::ifstream f(p);
            if (!f) throw std::invalid_argument("cannot open: " + p);
            return std::string((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
        };
        std::string ref = slurp(files[0]), hyp = slurp(files[1]);
        if (name == "ed")
            std::cout << edit_distance(ref, hyp) << "\n";
        else
            std::cout << cer(ref, hyp) << "\n";
    } else if (name == "dls") {
        if (files.size() != 2) throw std::invalid_argument("dls needs ref.json test.json");
        auto v = dls(load_layout(files[0]), load_layout(files[1]), threshold);
        if (!v) {
            std::cout << "skipped (no confident regions)\n";
            return 0;
        }
        std::cout << *v << "\n";
    } else {
        throw std::invalid_argument("unknown metric: " + name);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-aware document dewarping toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "key=value config file")->expected(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    int n = 16, size = 0;
    std::uint64_t seed = 0;
    std::string out_dir, data, model_path, input, mask_path, mode = "average";
    synth->add_option("--n", n, "sample count")->required();
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--seed", seed, "global seed");
    synth->add_option("--size", size, "page size (multiple of 16)");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--data", data, "dataset manifest")->required();
    tr->add_option("--out", out_dir, "run directory")->required();
    std::optional<int> opt_epochs, opt_t_total, opt_batch;
    std::optional<double> opt_lr, opt_beta;
    std::optional<std::uint64_t> opt_seed;
    tr->add_option("--epochs", opt_epochs, "override epochs");
    tr->add_option("--t-total", opt_t_total, "override T");
    tr->add_option("--batch-size", opt_batch, "override batch size");
    tr->add_option("--lr", opt_lr, "override learning rate");
    tr->add_option("--beta", opt_beta, "override reconstruction weight");
    tr->add_option("--seed", opt_seed, "override seed");

    // dewarp
    auto* dw = app.add_subcommand("dewarp", "rectify one image");
    bool sequential = false;
    dw->add_option("--model", model_path, "checkpoint")->required();
    dw->add_option("--input", input, "distorted image")->required();
    dw->add_option("--mask", mask_path, "optional mask image (gt bypass)");
    dw->add_option("--mode", mode, "direct|average")->check(CLI::IsMember({"direct", "average"}));
    dw->add_flag("--sequential", sequential, "run average-mode timesteps sequentially");
    dw->add_option("--out", out_dir, "output directory")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate on a dataset");
    bool identity_baseline = false;
    ev->add_option("--model", model_path, "checkpoint");
    ev->add_flag("--identity", identity_baseline, "evaluate the identity baseline");
    ev->add_option("--data", data, "dataset manifest")->required();
    ev->add_option("--mode", mode, "direct|average")->check(CLI::IsMember({"direct", "average"}));
    ev->add_option("--out", out_dir, "output directory")->required();

    // metric
    auto* mt = app.add_subcommand("metric", "compute one metric on files");
    std::string metric_name;
    std::vector<std::string> metric_files;
    int out_h = 128, out_w = 128;
    double threshold = 0.5;
    mt->add_option("--name", metric_name, "msssim|ld|ld-reg|ad|cer|ed|dls")->required();
    mt->add_option("files", metric_files, "input files")->expected(-1);
    mt->add_option("--out-h", out_h, "LD/AD output grid height");
    mt->add_option("--out-w", out_w, "LD/AD output grid width");
    mt->add_option("--threshold", threshold, "DLS confidence threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 1 : 0;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.apply(parse_config_file(config_path));
        if (opt_epochs) cfg.model.epochs = *opt_epochs;
        if (opt_t_total) cfg.model.t_total = *opt_t_total;
        if (opt_batch) cfg.model.batch_size = *opt_batch;
        if (opt_lr) cfg.model.lr = *opt_lr;
        if (opt_beta) cfg.model.beta = *opt_beta;
        if (opt_seed) cfg.model.seed = *opt_seed;

        if (synth->parsed()) return cmd_synth(n, out_dir, seed, size, cfg);
        if (tr->parsed()) return cmd_train(data, out_dir, cfg);
        if (dw->parsed())
            return cmd_dewarp(model_path, input, mask_path, mode, sequential, out_dir);
        if (ev->parsed()) {
            if (!identity_baseline && model_path.empty())
                throw std::invalid_argument("eval needs --model or --identity");
            return cmd_eval(model_path, identity_baseline, data, mode, out_dir, cfg);
        }
        if (mt->parsed()) return cmd_metric(metric_name, metric_files, out_h, out_w, threshold);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

// hdn: hierarchical diversity denoising toolkit.
//
// Subcommands: make-data, calibrate-noise, train, denoise, generate,
// inspect-layers, autocorr, evaluate. Every command writes a run manifest
// sufficient to reproduce its outputs bit-identically.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hdn/cli/manifest.hpp"
#include "hdn/hdn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve_out(const std::string& out) {
    if (out.empty() || fs::path(out).is_absolute()) return out;
    if (const char* root = std::getenv("HDN_OUTPUT_ROOT")) return (fs::path(root) / out).string();
    return out;
}

std::string two_digit_ext(int i, int width = 4) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%0*d", width, i);
    return buf;
}

std::pair<int, int> parse_size(const std::string& text) {
    const auto x = text.find('x');
    if (x == std::string::npos) throw hdn::ConfigError("size: expected HxW, got '" + text + "'");
    try {
        return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
    } catch (const std::exception&) {
        throw hdn::ConfigError("size: expected integers in HxW, got '" + text + "'");
    }
}

hdn::Checkpoint load_checkpoint_checked(const std::string& path) {
    if (!fs::exists(path)) throw hdn::CheckpointNotFoundError("no such checkpoint: " + path);
    return hdn::load_checkpoint(path);
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw hdn::FileNotFoundError("cannot open: " + path);
    json j;
    in >> j;
    return j;
}

// ---------------------------------------------------------------------------

int cmd_make_data(const std::string& kind, int count, int size, std::uint64_t seed,
                  const std::string& out_raw, double noise_sigma, const hdn::ToyOptions& opt,
                  const std::vector<std::string>& argv) {
    const std::string out = resolve_out(out_raw);
    fs::create_directories(fs::path(out) / "clean");
    auto ds = hdn::make_toy_dataset(kind, count, size, seed, opt);
    hdn::RunManifest manifest;
    manifest.command = "make-data";
    manifest.argv = argv;
    manifest.resolved_config = ds.params;
    manifest.resolved_config["noise_sigma"] = noise_sigma;
    manifest.seeds = {{"seed", seed}};
    const bool write_noisy = kind == "striped_blobs" || noise_sigma > 0;
    if (write_noisy) fs::create_directories(fs::path(out) / "noisy");
    for (int i = 0; i < count; ++i) {
        const std::string clean_path = (fs::path(out) / "clean" / (two_digit_ext(i) + ".tiff")).string();
        hdn::write_tiff(clean_path, ds.clean[static_cast<std::size_t>(i)]);
        manifest.output_paths.push_back(clean_path);
        if (!write_noisy) continue;
        hdn::Image noisy = kind == "striped_blobs"
                               ? ds.corrupted[static_cast<std::size_t>(i)]
                               : hdn::corrupt_gaussian(ds.clean[static_cast<std::size_t>(i)], noise_sigma,
                                                       hdn::hash_combine(seed, 0xC0u, static_cast<std::uint64_t>(i)));
        const std::string noisy_path = (fs::path(out) / "noisy" / (two_digit_ext(i) + ".tiff")).string();
        hdn::write_tiff(noisy_path, noisy);
        manifest.output_paths.push_back(noisy_path);
    }
    manifest.write((fs::path(out) / "manifest.json").string());
    std::cout << "wrote " << count << " " << kind << " images under " << out << "\n";
    return 0;
}

int cmd_calibrate(const std::string& type, const std::string& noisy_dir, const std::string& clean_dir,
                  bool bootstrap, double sigma, int signal_bins, int obs_bins, int components,
                  int degree, int iters, std::uint64_t seed, const std::string& out_raw,
                  const std::vector<std::string>& argv) {
    const std::string out = resolve_out(out_raw);
    hdn::NoiseModel model = hdn::NoiseModel::gaussian(1.0);
    json fit_info;
    std::vector<std::string> inputs;
    if (type == "gaussian") {
        if (!(sigma > 0)) throw hdn::ConfigError("calibrate-noise: gaussian type needs --sigma > 0");
        model = hdn::NoiseModel::gaussian(sigma);
    } else {
        auto noisy = hdn::read_tiff_dir(noisy_dir);
        auto clean = hdn::read_tiff_dir(clean_dir);
        for (const auto& p : hdn::list_tiffs(noisy_dir)) inputs.push_back(p);
        for (const auto& p : hdn::list_tiffs(clean_dir)) inputs.push_back(p);
        auto set = bootstrap ? hdn::bootstrap_pairs(noisy, clean)
                             : hdn::CalibrationSet{noisy, clean, "paired"};
        if (type == "histogram") {
            model = hdn::fit_histogram(set, signal_bins, obs_bins);
        } else if (type == "gmm") {
            auto fit = hdn::fit_gmm(set, components, degree, iters, seed);
            model = fit.model;
            fit_info["final_nll"] = fit.nll_trace.back();
        } else {
            throw hdn::ConfigError("calibrate-noise: unknown --type '" + type + "'");
        }
        for (const auto& w : model.fit_warnings()) std::cerr << "warning: " << w << "\n";
    }
    {
        fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw hdn::FileNotFoundError("cannot write noise model: " + out);
        f << model.to_json().dump(2) << "\n";
    }
    hdn::RunManifest manifest;
    manifest.command = "calibrate-noise";
    manifest.argv = argv;
    manifest.resolved_config = {{"type", type},       {"bootstrap", bootstrap},
                                {"sigma", sigma},     {"signal_bins", signal_bins},
                                {"obs_bins", obs_bins}, {"components", components},
                                {"degree", degree},   {"iters", iters}};
    manifest.resolved_config["fit_info"] = fit_info;
    manifest.seeds = {{"seed", seed}};
    manifest.input_paths = inputs;
    manifest.output_paths = {out};
    manifest.write(out + ".manifest.json");
    std::cout << "noise model (" << type << ") written to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& val_dir,
              const std::string& nm_path, const std::string& out_raw, const std::string& resume,
              const std::vector<std::string>& argv) {
    const std::string out = resolve_out(out_raw);
    const json cfg_json = read_json_file(config_path);
    hdn::HdnConfig model_cfg = cfg_json.value("model", hdn::HdnConfig{});
    hdn::TrainConfig train_cfg = cfg_json.value("train", hdn::TrainConfig{});
    model_cfg = train_cfg.apply_ablations(model_cfg);
    model_cfg.validate();

    if (!fs::exists(nm_path)) throw hdn::FileNotFoundError("no such noise model: " + nm_path);
    auto nm = hdn::NoiseModel::from_json(read_json_file(nm_path));

    auto images = hdn::read_tiff_dir(data_dir);
    std::vector<hdn::Image> train_images, val_images;
    if (!val_dir.empty()) {
        train_images = images;
        val_images = hdn::read_tiff_dir(val_dir);
    } else {
        const std::size_t n_val = std::max<std::size_t>(1, images.size() / 10);
        train_images.assign(images.begin(), images.end() - static_cast<std::ptrdiff_t>(n_val));
        val_images.assign(images.end() - static_cast<std::ptrdiff_t>(n_val), images.end());
    }

    hdn::ModelParameters<float> model;
    std::int64_t start_step = 0;
    std::optional<hdn::OptimizerState> opt_state;
    if (!resume.empty()) {
        auto ck = load_checkpoint_checked(resume);
        model = std::move(ck.model);
        start_step = ck.train_step;
        opt_state = std::move(ck.optimizer);
        std::cout << "resuming from step " << start_step << "\n";
    } else {
        model = hdn::build_model<float>(model_cfg, train_cfg.seed);
    }
    std::cout << "model parameters: " << model.parameter_count() << "\n";

    auto result = hdn::train(model, train_images, val_images, nm, train_cfg, out, start_step,
                             opt_state ? &*opt_state : nullptr);
    std::cout << "best validation loss " << result.best_val_loss << "; checkpoints under " << out
              << "\n";

    hdn::RunManifest manifest;
    manifest.command = "train";
    manifest.argv = argv;
    manifest.resolved_config = {{"model", model.config}, {"train", train_cfg}};
    manifest.seeds = {{"seed", train_cfg.seed}};
    manifest.input_paths = {config_path, data_dir, nm_path};
    manifest.output_paths = {result.best_checkpoint, result.last_checkpoint};
    manifest.checkpoint_hash = hdn::hex64(hdn::fnv1a64_file(result.last_checkpoint));
    manifest.write((fs::path(out) / "manifest.json").string());
    return 0;
}

int cmd_denoise(const std::string& ckpt, const std::string& in_path, const std::string& out_raw,
                int samples, std::uint64_t seed, const std::string& estimator,
                const std::string& active_layers, bool prior_mean, double bandwidth,
                const std::string& diversity_out, bool save_samples,
                const std::vector<std::string>& argv) {
    const std::string out = resolve_out(out_raw);
    auto ck = load_checkpoint_checked(ckpt);
    auto& model = ck.model;
    const auto spec = hdn::LayerModeSpec::parse(
        active_layers.empty() ? "1-" + std::to_string(model.config.n_layers) : active_layers,
        model.config.n_layers);

    std::vector<std::string> inputs;
    if (fs::is_directory(in_path)) {
        inputs = hdn::list_tiffs(in_path);
        if (inputs.empty()) throw hdn::FileNotFoundError("no TIFF images in " + in_path);
    } else if (fs::exists(in_path)) {
        inputs = {in_path};
    } else {
        throw hdn::FileNotFoundError("no such input: " + in_path);
    }
    fs::create_directories(out);
    if (!diversity_out.empty()) fs::create_directories(diversity_out);

    hdn::RunManifest manifest;
    manifest.command = "denoise";
    manifest.argv = argv;
    manifest.resolved_config = {{"samples", samples},
                                {"estimator", estimator},
                                {"active_layers", spec.first_active},
                                {"prior_mean", prior_mean},
                                {"bandwidth", bandwidth},
                                {"model", model.config}};
    manifest.seeds = {{"seed", seed}};
    manifest.input_paths = inputs;
    manifest.checkpoint_hash = hdn::hex64(hdn::fnv1a64_file(ckpt));

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const hdn::Image x = hdn::read_tiff(inputs[i]);
        const std::uint64_t image_seed = hdn::hash_combine(seed, 0x1Du, static_cast<std::uint64_t>(i));
        auto set = hdn::denoise_deactivated(model, x, spec, samples, image_seed, prior_mean);
        hdn::Image estimate;
        if (estimator == "mmse") {
            estimate = hdn::mmse_estimate(set);
        } else if (estimator == "median") {
            estimate = hdn::median_estimate(set);
        } else if (estimator == "map") {
            std::size_t unconverged = 0;
            estimate = hdn::map_estimate(set, bandwidth, &unconverged);
            if (unconverged > 0)
                std::cerr << "warning: " << unconverged << " pixels unconverged in mean-shift for "
                          << inputs[i] << "\n";
        } else {
            throw hdn::ConfigError("denoise: unknown --estimator '" + estimator + "'");
        }
        const std::string stem = fs::path(inputs[i]).stem().string();
        const std::string est_path = (fs::path(out) / (stem + "_" + estimator + ".tiff")).string();
        hdn::write_tiff(est_path, estimate);
        manifest.output_paths.push_back(est_path);
        if (!diversity_out.empty() && samples >= 2) {
            const std::string div_path =
                (fs::path(diversity_out) / (stem + "_diversity.tiff")).string();
            hdn::write_tiff(div_path, hdn::diversity_map(set));
            manifest.output_paths.push_back(div_path);
        }
        if (save_samples) {
            fs::create_directories(fs::path(out) / "samples");
            for (int k = 0; k < samples; ++k) {
                const std::string sp =
                    (fs::path(out) / "samples" / (stem + "_s" + two_digit_ext(k, 3) + ".tiff")).string();
                hdn::write_tiff(sp, set.samples[static_cast<std::size_t>(k)]);
                manifest.output_paths.push_back(sp);
            }
        }
    }
    manifest.write((fs::path(out) / "manifest.json").string());
    std::cout << "denoised " << inputs.size() << " image(s) -> " << out << "\n";
    return 0;
}

int cmd_generate(const std::string& ckpt, const std::string& size_text, int count,
                 std::uint64_t seed, const std::string& out_raw,
                 const std::vector<std::string>& argv) {
    const std::string out = resolve_out(out_raw);
    auto ck = load_checkpoint_checked(ckpt);
    auto [h, w] = parse_size(size_text);
    auto images = hdn::generate(ck.model, h, w, count, seed);
    fs::create_directories(out);
    hdn::RunManifest manifest;
    manifest.command = "generate";
    manifest.argv = argv;
    manifest.resolved_config = {{"size", size_text}, {"count", count}, {"model", ck.model.config}};
    manifest.seeds = {{"seed", seed}};
    manifest.checkpoint_hash = hdn::hex64(hdn::fnv1a64_file(ckpt));
    for (int i = 0; i < count; ++i) {
        const std::string p = (fs::path(out) / ("gen_" + two_digit_ext(i) + ".tiff")).string();
        hdn::write_tiff(p, images[static_cast<std::size_t>(i)]);
        manifest.output_paths.push_back(p);
    }
    manifest.write((fs::path(out) / "manifest.json").string());
    std::cout << "generated " << count << " image(s) of " << size_text << " -> " << out << "\n";
    return 0;
}

int cmd_inspect_layers(const std::string& ckpt, int layer, int variants, std::uint64_t seed,
                       const std::string& size_text, const std::string& out_raw,
                       const std::vector<std::string>& argv) {
    const std::string out = resolve_out(out_raw);
    auto ck = load_checkpoint_checked(ckpt);
    int h = ck.model.config.patch_height, w = ck.model.config.patch_width;
    if (!size_text.empty()) std::tie(h, w) = parse_size(size_text);
    auto grid = hdn::assemble_grid(hdn::visualize_layer(ck.model, layer, variants, seed, h, w));
    fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
    hdn::write_tiff(out, grid);
    hdn::RunManifest manifest;
    manifest.command = "inspect-layers";
    manifest.argv = argv;
    manifest.resolved_config = {{"layer", layer}, {"variants", variants}, {"size", size_text}};
    manifest.seeds = {{"seed", seed}};
    manifest.checkpoint_hash = hdn::hex64(hdn::fnv1a64_file(ckpt));
    manifest.output_paths = {out};
    manifest.write(out + ".manifest.json");
    std::cout << "layer " << layer << " grid (" << variants << " variants) -> " << out << "\n";
    return 0;
}

int cmd_autocorr(const std::string& in_path, const std::string& gt_path, double background_quantile,
                 int max_lag, const std::string& out_raw, const std::vector<std::string>& argv) {
    const std::string out = resolve_out(out_raw);
    hdn::Image residual = hdn::read_tiff(in_path);
    std::vector<std::uint8_t> mask;
    if (!gt_path.empty()) {
        residual = hdn::residual_from_gt(residual, hdn::read_tiff(gt_path));
    } else if (background_quantile > 0) {
        mask = hdn::background_mask(residual, background_quantile);
    }
    auto corr = hdn::autocorrelation(residual, max_lag, mask.empty() ? nullptr : &mask);
    fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
    hdn::write_tiff(out, corr);
    hdn::RunManifest manifest;
    manifest.command = "autocorr";
    manifest.argv = argv;
    manifest.resolved_config = {{"max_lag", max_lag}, {"background_quantile", background_quantile}};
    manifest.input_paths = {in_path};
    if (!gt_path.empty()) manifest.input_paths.push_back(gt_path);
    manifest.output_paths = {out};
    manifest.write(out + ".manifest.json");
    std::cout << "autocorrelation map (" << 2 * max_lag + 1 << "x" << 2 * max_lag + 1 << ") -> "
              << out << "\n";
    return 0;
}

int cmd_evaluate(const std::string& gt_dir, const std::string& pred_dir, const std::string& out_raw,
                 double range_override, const std::vector<std::string>& argv) {
    const std::string out = resolve_out(out_raw);
    auto gt_paths = hdn::list_tiffs(gt_dir);
    auto pred_paths = hdn::list_tiffs(pred_dir);
    if (gt_paths.size() != pred_paths.size() || gt_paths.empty())
        throw hdn::ShapeError("evaluate: gt and pred directories must pair up");
    std::vector<hdn::Image> gt, pred;
    for (const auto& p : gt_paths) gt.push_back(hdn::read_tiff(p));
    for (const auto& p : pred_paths) pred.push_back(hdn::read_tiff(p));
    double range = range_override;
    if (!(range > 0)) {
        auto [lo, hi] = hdn::value_range(gt);
        range = hi - lo;
    }
    auto report = hdn::evaluate_pairs(gt, pred, range);

    fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
    std::ofstream csv(out, std::ios::trunc);
    if (!csv) throw hdn::FileNotFoundError("cannot write report: " + out);
    csv << "image,psnr_db,ssim\n";
    for (std::size_t i = 0; i < gt.size(); ++i)
        csv << fs::path(gt_paths[i]).stem().string() << "," << report.psnr_per_image[i] << ","
            << report.ssim_per_image[i] << "\n";
    csv << "mean," << report.psnr_mean << "," << report.ssim_mean << "\n";
    csv << "std," << report.psnr_std << "," << report.ssim_std << "\n";
    csv.close();

    hdn::RunManifest manifest;
    manifest.command = "evaluate";
    manifest.argv = argv;
    manifest.resolved_config = {{"data_range", range}};
    manifest.input_paths = {gt_dir, pred_dir};
    manifest.output_paths = {out};
    manifest.write(out + ".manifest.json");
    std::cout << "PSNR " << report.psnr_mean << " dB, SSIM " << report.ssim_mean << " over "
              << gt.size() << " image(s); report -> " << out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    hdn::tune_allocator();
    std::vector<std::string> argv_copy(argv, argv + argc);

    CLI::App app{"hierarchical diversity denoising toolkit"};
    app.require_subcommand(1);
    int workers = 2;
    app.add_option("--workers", workers, "reader/sampler worker cap")->capture_default_str();

    // make-data
    auto* mk = app.add_subcommand("make-data", "generate synthetic toy datasets");
    std::string mk_kind = "blobs", mk_out;
    int mk_count = 100, mk_size = 64;
    std::uint64_t mk_seed = 0;
    double mk_noise = 0.0;
    hdn::ToyOptions toy;
    mk->add_option("--kind", mk_kind, "blobs | membranes | striped_blobs")->capture_default_str();
    mk->add_option("--count", mk_count)->capture_default_str();
    mk->add_option("--size", mk_size)->capture_default_str();
    mk->add_option("--seed", mk_seed)->capture_default_str();
    mk->add_option("--out", mk_out)->required();
    mk->add_option("--noise-sigma", mk_noise, "also write Gaussian-corrupted copies");
    mk->add_option("--pixel-sigma", toy.pixel_sigma, "pixel noise under stripes")->capture_default_str();
    mk->add_option("--stripe-std", toy.stripe_std)->capture_default_str();
    mk->add_option("--stripe-fraction", toy.stripe_fraction)->capture_default_str();
    mk->add_option("--stripe-corr-len", toy.stripe_corr_len)->capture_default_str();

    // calibrate-noise
    auto* cal = app.add_subcommand("calibrate-noise", "fit a pixel noise model");
    std::string cal_type = "gmm", cal_noisy, cal_clean, cal_out;
    bool cal_bootstrap = false;
    double cal_sigma = 0.0;
    int cal_sbins = 64, cal_obins = 128, cal_k = 3, cal_deg = 2, cal_iters = 2000;
    std::uint64_t cal_seed = 0;
    cal->add_option("--type", cal_type, "gaussian | histogram | gmm")->capture_default_str();
    cal->add_option("--noisy", cal_noisy, "directory of noisy images");
    cal->add_option("--clean", cal_clean, "directory of clean (or pseudo-clean) images");
    cal->add_flag("--bootstrap", cal_bootstrap, "clean images are a denoiser's pseudo-clean output");
    cal->add_option("--sigma", cal_sigma, "for --type gaussian");
    cal->add_option("--signal-bins", cal_sbins)->capture_default_str();
    cal->add_option("--obs-bins", cal_obins)->capture_default_str();
    cal->add_option("--components", cal_k)->capture_default_str();
    cal->add_option("--degree", cal_deg)->capture_default_str();
    cal->add_option("--iters", cal_iters)->capture_default_str();
    cal->add_option("--seed", cal_seed)->capture_default_str();
    cal->add_option("--out", cal_out)->required();

    // train
    auto* tr = app.add_subcommand("train", "train a model on noisy images");
    std::string tr_config, tr_data, tr_val, tr_nm, tr_out, tr_resume;
    tr->add_option("--config", tr_config)->required();
    tr->add_option("--data", tr_data, "directory of noisy training images")->required();
    tr->add_option("--val", tr_val, "optional validation directory (default: last 10% of --data)");
    tr->add_option("--noise-model", tr_nm)->required();
    tr->add_option("--out", tr_out)->required();
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");

    // denoise
    auto* dn = app.add_subcommand("denoise", "sample diverse restorations and reduce them");
    std::string dn_ckpt, dn_in, dn_out, dn_estimator = "mmse", dn_layers, dn_divout;
    int dn_samples = 100;
    std::uint64_t dn_seed = 0;
    bool dn_prior_mean = false, dn_save_samples = false;
    double dn_bandwidth = 0.0;
    dn->add_option("--checkpoint", dn_ckpt)->required();
    dn->add_option("--in", dn_in, "input image or directory")->required();
    dn->add_option("--out", dn_out)->required();
    dn->add_option("--samples", dn_samples)->capture_default_str();
    dn->add_option("--seed", dn_seed)->capture_default_str();
    dn->add_option("--estimator", dn_estimator, "mmse | median | map")->capture_default_str();
    dn->add_option("--active-layers", dn_layers, "k-n: layers below k run from the prior");
    dn->add_flag("--prior-mean", dn_prior_mean, "deactivated layers use the prior mean");
    dn->add_option("--bandwidth", dn_bandwidth, "mean-shift bandwidth (0: range/10 per pixel)");
    dn->add_option("--diversity-out", dn_divout, "directory for per-pixel std maps");
    dn->add_flag("--save-samples", dn_save_samples, "write every posterior sample");

    // generate
    auto* gen = app.add_subcommand("generate", "unconditional generation from the prior");
    std::string gen_ckpt, gen_size = "64x64", gen_out;
    int gen_count = 6;
    std::uint64_t gen_seed = 0;
    gen->add_option("--checkpoint", gen_ckpt)->required();
    gen->add_option("--size", gen_size, "HxW")->capture_default_str();
    gen->add_option("--count", gen_count)->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("--out", gen_out)->required();

    // inspect-layers
    auto* ins = app.add_subcommand("inspect-layers", "visualize what one latent layer encodes");
    std::string ins_ckpt, ins_out, ins_size;
    int ins_layer = 1, ins_variants = 6;
    std::uint64_t ins_seed = 0;
    ins->add_option("--checkpoint", ins_ckpt)->required();
    ins->add_option("--layer", ins_layer)->required();
    ins->add_option("--variants", ins_variants)->capture_default_str();
    ins->add_option("--seed", ins_seed)->capture_default_str();
    ins->add_option("--size", ins_size, "HxW (default: training patch size)");
    ins->add_option("--out", ins_out)->required();

    // autocorr
    auto* ac = app.add_subcommand("autocorr", "spatial autocorrelation of a residual");
    std::string ac_in, ac_gt, ac_out;
    double ac_quantile = 0.0;
    int ac_lag = 16;
    ac->add_option("--in", ac_in, "residual image (or raw image with --gt/--background-quantile)")
        ->required();
    ac->add_option("--gt", ac_gt, "ground truth; residual becomes in - gt");
    ac->add_option("--background-quantile", ac_quantile,
                   "estimate from background pixels below this intensity quantile");
    ac->add_option("--max-lag", ac_lag)->capture_default_str();
    ac->add_option("--out", ac_out)->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "PSNR/SSIM report against ground truth");
    std::string ev_gt, ev_pred, ev_out;
    double ev_range = 0.0;
    ev->add_option("--gt", ev_gt)->required();
    ev->add_option("--pred", ev_pred)->required();
    ev->add_option("--out", ev_out)->required();
    ev->add_option("--range", ev_range, "data range override (default: gt min-max)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::cerr << "error: usage-error: " << e.what() << "\n";
        return 64;
    }

    hdn::set_worker_count(workers);
    try {
        if (*mk)
            return cmd_make_data(mk_kind, mk_count, mk_size, mk_seed, mk_out, mk_noise, toy, argv_copy);
        if (*cal)
            return cmd_calibrate(cal_type, cal_noisy, cal_clean, cal_bootstrap, cal_sigma, cal_sbins,
                                 cal_obins, cal_k, cal_deg, cal_iters, cal_seed, cal_out, argv_copy);
        if (*tr) return cmd_train(tr_config, tr_data, tr_val, tr_nm, tr_out, tr_resume, argv_copy);
        if (*dn)
            return cmd_denoise(dn_ckpt, dn_in, dn_out, dn_samples, dn_seed, dn_estimator, dn_layers,
                               dn_prior_mean, dn_bandwidth, dn_divout, dn_save_samples, argv_copy);
        if (*gen) return cmd_generate(gen_ckpt, gen_size, gen_count, gen_seed, gen_out, argv_copy);
        if (*ins)
            return cmd_inspect_layers(ins_ckpt, ins_layer, ins_variants, ins_seed, ins_size, ins_out,
                                      argv_copy);
        if (*ac) return cmd_autocorr(ac_in, ac_gt, ac_quantile, ac_lag, ac_out, argv_copy);
        if (*ev) return cmd_evaluate(ev_gt, ev_pred, ev_out, ev_range, argv_copy);
    } catch (const hdn::Error& e) {
        std::cerr << "error: " << e.category << ": " << e.what() << "\n";
        return e.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: internal-error: " << e.what() << "\n";
        return 70;
    }
    return 0;
}

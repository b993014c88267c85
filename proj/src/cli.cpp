#include "sarfah/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "sarfah/dataset.hpp"
#include "sarfah/metrics.hpp"
#include "sarfah/model.hpp"
#include "sarfah/speckle.hpp"
#include "sarfah/trainer.hpp"
#include "sarfah/wavelet.hpp"

namespace sarfah {

namespace {

std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_key_value_text(buf.str());
}

Image normalize_for_display(const Image& img) {
    double lo = img.px.empty() ? 0.0 : img.px[0], hi = lo;
    for (double v : img.px) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Image out(img.h, img.w);
    if (hi > lo)
        for (int64_t i = 0; i < img.size(); ++i) out.px[i] = 255.0 * (img.px[i] - lo) / (hi - lo);
    return out;
}

// preset -> key=value map; flags override these
std::map<std::string, std::string> preset_kv(const std::string& name) {
    if (name == "desk") return {};  // the built-in defaults are the desk-scale preset
    if (name == "paper")
        return {{"channels", "128"}, {"ode_steps", "4"},  {"patch_size", "128"},
                {"epochs", "20"},    {"batch_size", "16"}, {"pos_resolution", "128"}};
    throw std::invalid_argument("unknown preset '" + name + "' (expected desk or paper)");
}

struct ModelFlagSet {
    std::optional<int64_t> channels, state_dim, experts, pos_resolution;
    std::optional<int> ode_steps;
    std::optional<double> ode_horizon;
    std::optional<std::string> deforconv;
    std::optional<bool> shared_hfde, dass_in_lfsp, dass_in_hfde, dcn_in_dass, use_node;

    void attach(CLI::App* cmd) {
        cmd->add_option("--channels", channels, "feature channels C (even)");
        cmd->add_option("--ode-steps", ode_steps, "ODE solver step count N");
        cmd->add_option("--ode-horizon", ode_horizon, "ODE integration horizon T");
        cmd->add_option("--deforconv", deforconv,
                        "deformable conv placement: none|encoder|decoder|both");
        cmd->add_option("--shared-hfde", shared_hfde, "share one HFDE across the HF bands (0/1)");
        cmd->add_option("--dass-in-lfsp", dass_in_lfsp, "keep DASS modules in LFSP-ODE (0/1)");
        cmd->add_option("--dass-in-hfde", dass_in_hfde, "keep the DASS module in HFDE (0/1)");
        cmd->add_option("--dcn-in-dass", dcn_in_dass,
                        "fuse DASS branches with dynamic conv (0) for plain 1x1 (0/1)");
        cmd->add_option("--use-node", use_node, "integrate LFSP as a NODE (0/1)");
        cmd->add_option("--state-dim", state_dim, "selective-scan state dimension");
        cmd->add_option("--experts", experts, "dynamic conv expert count");
        cmd->add_option("--pos-resolution", pos_resolution, "pos-embed training resolution");
    }

    void overlay(std::map<std::string, std::string>& kv) const {
        auto put = [&](const char* k, auto& opt) {
            if (opt) {
                std::ostringstream os;
                os << *opt;
                kv[k] = os.str();
            }
        };
        put("channels", channels);
        put("ode_steps", ode_steps);
        put("ode_horizon", ode_horizon);
        put("state_dim", state_dim);
        put("experts", experts);
        put("pos_resolution", pos_resolution);
        if (deforconv) kv["deforconv"] = *deforconv;
        auto putb = [&](const char* k, const std::optional<bool>& opt) {
            if (opt) kv[k] = *opt ? "1" : "0";
        };
        putb("shared_hfde", shared_hfde);
        putb("dass_in_lfsp", dass_in_lfsp);
        putb("dass_in_hfde", dass_in_hfde);
        putb("dcn_in_dass", dcn_in_dass);
        putb("use_node", use_node);
    }
};

int run_synthesize(const std::string& input, const std::string& output, double looks,
                   uint64_t seed) {
    Image clean = load_image(input);
    Image noisy = synthesize_speckle(clean, {looks}, seed);
    write_pgm(output, noisy);
    return 0;
}

int run_fit_dist(const std::string& input, const std::string& dist, const std::string& band) {
    Image img = load_image(input);
    std::vector<double> samples;
    if (band == "none") {
        samples = img.px;
    } else {
        SubBands sb = dwt2_haar(img);
        const Image* plane = band == "ll"   ? &sb.ll
                             : band == "lh" ? &sb.lh
                             : band == "hl" ? &sb.hl
                             : band == "hh" ? &sb.hh
                                            : nullptr;
        if (!plane) throw std::invalid_argument("fit-dist: band must be none|ll|lh|hl|hh");
        samples = plane->px;
    }
    if (dist == "gamma" || dist == "both") {
        GammaParams p = fit_gamma(samples);
        std::cout << "gamma_shape," << format_metric_value(p.shape_a) << "\n";
        std::cout << "gamma_scale," << format_metric_value(p.scale_b) << "\n";
    }
    if (dist == "ggd" || dist == "both") {
        GGDParams p = fit_ggd(samples);
        std::cout << "ggd_alpha," << format_metric_value(p.alpha) << "\n";
        std::cout << "ggd_beta," << format_metric_value(p.beta) << "\n";
    }
    if (dist != "gamma" && dist != "ggd" && dist != "both")
        throw std::invalid_argument("fit-dist: dist must be gamma|ggd|both");
    return 0;
}

int run_theorem_check(double shape, double scale, int level, int64_t size, uint64_t seed,
                      double moment_tol, double skew_tol, int64_t min_samples) {
    Theorem1Options opt;
    opt.moment_tol = moment_tol;
    opt.skew_tol = skew_tol;
    opt.min_samples = min_samples;
    Theorem1Report rep = verify_theorem1({shape, scale}, level, size, seed, opt);
    std::cout << "level," << rep.level_j << "\n";
    std::cout << "ll_mean," << format_metric_value(rep.ll_mean) << "\n";
    std::cout << "ll_var," << format_metric_value(rep.ll_var) << "\n";
    std::cout << "ll_moment_error," << format_metric_value(rep.ll_moment_error) << "\n";
    std::cout << "skew_lh," << format_metric_value(rep.hf_skewness[0]) << "\n";
    std::cout << "skew_hl," << format_metric_value(rep.hf_skewness[1]) << "\n";
    std::cout << "skew_hh," << format_metric_value(rep.hf_skewness[2]) << "\n";
    std::cout << "pass," << (rep.pass ? 1 : 0) << "\n";
    return 0;
}

int run_despeckle(const std::string& model_path, const std::string& input,
                  const std::string& output, const std::string& dump_prefix) {
    Image noisy = load_image(input);
    if (!dump_prefix.empty()) {
        SubBands sb = dwt2_haar(noisy);
        write_pgm(dump_prefix + "_ll.pgm", normalize_for_display(sb.ll));
        write_pgm(dump_prefix + "_lh.pgm", normalize_for_display(sb.lh));
        write_pgm(dump_prefix + "_hl.pgm", normalize_for_display(sb.hl));
        write_pgm(dump_prefix + "_hh.pgm", normalize_for_display(sb.hh));
    }
    SarFahModel model = SarFahModel::from_checkpoint(model_path);
    write_pgm(output, model.despeckle(noisy));
    return 0;
}

int run_evaluate(const std::string& clean_path, const std::string& denoised_path,
                 const std::string& noisy_path, const std::string& region_spec) {
    Image denoised = load_image(denoised_path);
    std::cout << "image,metric,region,value\n";
    auto row = [&](const std::string& metric, const std::string& region, double value) {
        std::cout << denoised_path << "," << metric << "," << region << ","
                  << format_metric_value(value) << "\n";
    };
    if (!clean_path.empty()) {
        Image clean = load_image(clean_path);
        row("psnr", "", psnr(clean, denoised));
        row("ssim", "", ssim(clean, denoised));
        row("mae", "", mae(clean, denoised));
        row("gssim", "", gssim(clean, denoised));
        row("iicc", "", iicc(clean, denoised));
    }
    Region region = region_spec.empty() ? full_frame(denoised) : parse_region(region_spec);
    const std::string rs = region_to_string(region);
    row("enl", rs, enl(denoised, region));
    if (!noisy_path.empty()) {
        Image noisy = load_image(noisy_path);
        row("moi", rs, moi(denoised, noisy, region));
        row("mor", "", mor(denoised, noisy));
        row("epd_roa_hd", rs, epd_roa(denoised, noisy, region, EpdDirection::kHorizontal));
        row("epd_roa_vd", rs, epd_roa(denoised, noisy, region, EpdDirection::kVertical));
    }
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"SAR-FAH frequency-adaptive despeckling toolkit"};
    app.require_subcommand(1);

    // synthesize
    auto* syn = app.add_subcommand("synthesize", "multiply an image with unit-mean Gamma speckle");
    std::string syn_in, syn_out;
    double syn_looks = 1.0;
    uint64_t syn_seed = 1;
    syn->add_option("--input", syn_in, "clean grayscale PGM/PNG")->required();
    syn->add_option("--output", syn_out, "output PGM")->required();
    syn->add_option("--looks", syn_looks, "number of looks L");
    syn->add_option("--seed", syn_seed, "RNG seed");

    // fit-dist
    auto* fit = app.add_subcommand("fit-dist", "fit Gamma/GGD parameters to image samples");
    std::string fit_in, fit_dist = "both", fit_band = "none";
    fit->add_option("--input", fit_in, "grayscale PGM/PNG")->required();
    fit->add_option("--dist", fit_dist, "gamma|ggd|both");
    fit->add_option("--band", fit_band, "fit on a Haar sub-band: none|ll|lh|hl|hh");

    // theorem-check
    auto* thm = app.add_subcommand("theorem-check", "Monte-Carlo check of the sub-band statistics");
    double thm_shape = 1.0, thm_scale = 1.0, thm_mtol = 0.02, thm_stol = 0.02;
    int thm_level = 1;
    int64_t thm_size = 1024, thm_min = 1000000;
    uint64_t thm_seed = 1;
    thm->add_option("--shape", thm_shape, "Gamma shape a");
    thm->add_option("--scale", thm_scale, "Gamma scale b");
    thm->add_option("--level", thm_level, "decomposition level j");
    thm->add_option("--size", thm_size, "field edge (power of two)");
    thm->add_option("--seed", thm_seed, "RNG seed");
    thm->add_option("--moment-tol", thm_mtol, "relative tolerance on the LL moments");
    thm->add_option("--skew-tol", thm_stol, "tolerance on HF skewness");
    thm->add_option("--min-samples", thm_min, "pooled coefficient count per band");

    // train
    auto* tr = app.add_subcommand("train", "train the despeckling model");
    std::string tr_corpus, tr_out = "runs", tr_config, tr_preset = "desk";
    std::optional<int> tr_epochs;
    std::optional<double> tr_lr_start, tr_lr_end, tr_looks, tr_val_fraction;
    std::optional<int64_t> tr_batch, tr_patch, tr_max_patches;
    std::optional<uint64_t> tr_seed;
    std::optional<bool> tr_augment;
    ModelFlagSet tr_model;
    tr->add_option("--corpus", tr_corpus, "directory of grayscale PGM/PNG images")->required();
    tr->add_option("--out", tr_out, "output directory for checkpoints");
    tr->add_option("--config", tr_config, "key=value config file (flags override it)");
    tr->add_option("--preset", tr_preset, "desk (default) or paper");
    tr->add_option("--epochs", tr_epochs, "training epochs");
    tr->add_option("--lr-start", tr_lr_start, "initial learning rate");
    tr->add_option("--lr-end", tr_lr_end, "final learning rate (cosine annealing)");
    tr->add_option("--batch-size", tr_batch, "patches per step");
    tr->add_option("--patch-size", tr_patch, "square patch edge (divisible by 4)");
    tr->add_option("--looks", tr_looks, "speckle looks L");
    tr->add_option("--seed", tr_seed, "run seed");
    tr->add_option("--augment", tr_augment, "dihedral augmentation (0/1)");
    tr->add_option("--val-fraction", tr_val_fraction, "held-out fraction of the patch stream");
    tr->add_option("--max-patches", tr_max_patches, "cap on the patch stream (0 = all)");
    tr_model.attach(tr);

    // despeckle
    auto* dsp = app.add_subcommand("despeckle", "run a trained model on an image");
    std::string dsp_model, dsp_in, dsp_out, dsp_dump;
    dsp->add_option("--model", dsp_model, "checkpoint path")->required();
    dsp->add_option("--input", dsp_in, "noisy grayscale PGM/PNG")->required();
    dsp->add_option("--output", dsp_out, "output PGM")->required();
    dsp->add_option("--dump-subbands", dsp_dump,
                    "write the input's Haar sub-bands as <prefix>_{ll,lh,hl,hh}.pgm");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "quality indices for a despeckled image");
    std::string ev_clean, ev_den, ev_noisy, ev_region;
    ev->add_option("--clean", ev_clean, "reference image (enables full-reference metrics)");
    ev->add_option("--denoised", ev_den, "despeckled image")->required();
    ev->add_option("--noisy", ev_noisy, "original noisy image (enables MoI/MoR/EPD-ROA)");
    ev->add_option("--region", ev_region, "homogeneous region x0,y0,w,h (default: full frame)");

    // param-count
    auto* pc = app.add_subcommand("param-count", "trainable parameter count of a configuration");
    ModelFlagSet pc_model;
    pc_model.attach(pc);
    std::string pc_preset = "desk";
    pc->add_option("--preset", pc_preset, "desk (default) or paper");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (syn->parsed()) return run_synthesize(syn_in, syn_out, syn_looks, syn_seed);
        if (fit->parsed()) return run_fit_dist(fit_in, fit_dist, fit_band);
        if (thm->parsed())
            return run_theorem_check(thm_shape, thm_scale, thm_level, thm_size, thm_seed, thm_mtol,
                                     thm_stol, thm_min);
        if (tr->parsed()) {
            std::map<std::string, std::string> kv = preset_kv(tr_preset);
            if (!tr_config.empty())
                for (auto& [k, v] : read_config_file(tr_config)) kv[k] = v;
            auto put = [&](const char* k, auto& opt) {
                if (opt) {
                    std::ostringstream os;
                    os << *opt;
                    kv[k] = os.str();
                }
            };
            put("epochs", tr_epochs);
            put("lr_start", tr_lr_start);
            put("lr_end", tr_lr_end);
            put("batch_size", tr_batch);
            put("patch_size", tr_patch);
            put("looks", tr_looks);
            put("seed", tr_seed);
            put("val_fraction", tr_val_fraction);
            put("max_patches", tr_max_patches);
            if (tr_augment) kv["augment"] = *tr_augment ? "1" : "0";
            tr_model.overlay(kv);
            kv["out_dir"] = tr_out;
            TrainConfig cfg = train_config_from_kv(kv);
            Corpus corpus = ingest_corpus(tr_corpus);
            TrainResult res = train(cfg, corpus, std::cout);
            std::cout << "best_checkpoint," << res.best_checkpoint << "\n";
            std::cout << "final_checkpoint," << res.final_checkpoint << "\n";
            return 0;
        }
        if (dsp->parsed()) return run_despeckle(dsp_model, dsp_in, dsp_out, dsp_dump);
        if (ev->parsed()) return run_evaluate(ev_clean, ev_den, ev_noisy, ev_region);
        if (pc->parsed()) {
            std::map<std::string, std::string> kv = preset_kv(pc_preset);
            pc_model.overlay(kv);
            TrainConfig cfg = train_config_from_kv(kv);
            std::cout << param_count(cfg.model) << "\n";
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

}  // namespace sarfah

#include "nusr/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "nusr/checkpoint.hpp"
#include "nusr/degrade.hpp"
#include "nusr/image_io.hpp"
#include "nusr/metrics.hpp"
#include "nusr/phantom.hpp"
#include "nusr/rng.hpp"
#include "nusr/run_config.hpp"
#include "nusr/train.hpp"
#include "nusr/unetpp.hpp"

namespace nusr {

namespace {

namespace fs = std::filesystem;

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::exists(dir) || !fs::is_directory(dir)) {
        throw IoError("input directory does not exist: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".fgrd" || ext == ".png") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<PairedSample> load_paired_dir(const fs::path& dir) {
    if (!fs::exists(dir) || !fs::is_directory(dir)) {
        throw IoError("dataset directory does not exist: " + dir.string());
    }
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (ends_with(name, ".hf.fgrd")) {
            stems.push_back(name.substr(0, name.size() - 8));
        }
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) {
        throw UsageError("no paired samples (*.hf.fgrd) found in " + dir.string());
    }
    std::vector<PairedSample> samples;
    samples.reserve(stems.size());
    for (const std::string& stem : stems) {
        const fs::path hf = dir / (stem + ".hf.fgrd");
        const fs::path lf = dir / (stem + ".lf.fgrd");
        const fs::path res = dir / (stem + ".res.fgrd");
        if (!fs::exists(lf) || !fs::exists(res)) {
            throw DomainError("sample '" + stem + "' is missing its .lf.fgrd or .res.fgrd partner");
        }
        samples.push_back(PairedSample{read_fgrd(hf), read_fgrd(lf), read_fgrd(res)});
    }
    return samples;
}

// Normalizes like make_pair does: constant images map to the midpoint of the
// target range with degenerate params that denormalize back to the constant.
std::pair<Tensor, NormParams> normalize_or_midpoint(const Tensor& image, double lo, double hi) {
    const auto data = image.data();
    scalar mn = data[0], mx = data[0];
    for (scalar v : data) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    if (mx <= mn) {
        NormParams params;
        params.in_min = static_cast<double>(mn);
        params.in_max = static_cast<double>(mn);
        params.lo = lo;
        params.hi = hi;
        return {Tensor::full(image.shape(), static_cast<scalar>((lo + hi) / 2.0)), params};
    }
    return normalize(image, lo, hi);
}

std::string method_label(const UNetPPConfig& cfg) {
    return cfg.nested ? "SR U-Net++" : "SR U-Net";
}

// ---- phantom ----

struct PhantomArgs {
    PhantomSpec spec;
};

int cmd_phantom(const PhantomArgs& args, const fs::path& out_dir) {
    args.spec.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
        throw IoError("cannot create output directory " + out_dir.string() +
                      (ec ? ": " + ec.message() : ""));
    }
    for (std::int64_t i = 0; i < args.spec.count; ++i) {
        const Tensor img = make_phantom(args.spec, i);
        char name[32];
        std::snprintf(name, sizeof(name), "phantom_%04lld", static_cast<long long>(i));
        write_fgrd(img, out_dir / (std::string(name) + ".fgrd"));
        write_png(img, out_dir / (std::string(name) + ".png"));
    }
    std::cout << "wrote " << args.spec.count << " phantom(s) to " << out_dir.string() << "\n";
    return 0;
}

// ---- degrade ----

int cmd_degrade(const RunConfig& cfg, const fs::path& in_dir, const fs::path& out_dir) {
    cfg.degrade.validate();
    const auto all_files = list_images(in_dir);
    if (all_files.empty()) {
        throw UsageError("no input images (*.fgrd, *.png) found in " + in_dir.string());
    }
    // One sample per stem; when a raster exists both as lossless .fgrd and as
    // a .png preview (as the phantom generator writes), the .fgrd wins.
    std::map<std::string, fs::path> by_stem;
    for (const auto& p : all_files) {
        auto [it, inserted] = by_stem.try_emplace(p.stem().string(), p);
        if (!inserted && p.extension() == ".fgrd") {
            it->second = p;
        }
    }
    std::vector<fs::path> files;
    files.reserve(by_stem.size());
    for (const auto& [stem, p] : by_stem) files.push_back(p);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
        throw IoError("cannot create output directory " + out_dir.string() +
                      (ec ? ": " + ec.message() : ""));
    }

    std::cout << "intermediate dims: " << cfg.degrade.derived_intermediate_width() << "x"
              << cfg.degrade.derived_intermediate_height() << "\n";

    std::ofstream manifest(out_dir / "manifest.csv", std::ios::trunc);
    if (!manifest) {
        throw IoError("cannot write manifest in " + out_dir.string());
    }
    manifest << "name,status,detail\n";

    std::size_t n_ok = 0, n_fail = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const std::string stem = files[i].stem().string();
        try {
            const Tensor hf_raw = read_image(files[i]);
            std::mt19937_64 rng(derive_seed(cfg.degrade.seed, static_cast<std::uint64_t>(i)));
            const PairedSample pair = make_pair(hf_raw, cfg.degrade, rng);
            write_fgrd(pair.hf, out_dir / (stem + ".hf.fgrd"));
            write_fgrd(pair.lf_bilinear, out_dir / (stem + ".lf.fgrd"));
            write_fgrd(pair.residual_target, out_dir / (stem + ".res.fgrd"));
            manifest << csv_quote(stem) << ",ok,\n";
            ++n_ok;
        } catch (const Error& e) {
            manifest << csv_quote(stem) << ",error," << csv_quote(e.what()) << "\n";
            std::cerr << "degrade: " << files[i].filename().string() << ": " << e.what() << "\n";
            ++n_fail;
        }
    }
    manifest.flush();
    std::cout << "degraded " << n_ok << "/" << files.size() << " image(s) into "
              << out_dir.string() << "\n";
    if (n_ok == 0) {
        throw DomainError("all " + std::to_string(n_fail) +
                          " input image(s) failed degradation; see manifest.csv");
    }
    return 0;
}

// ---- train ----

void write_report(const EvalReport& report, const fs::path& out_dir) {
    const std::string csv = report.to_csv();
    std::ofstream out(out_dir / "report.csv", std::ios::trunc);
    if (!out) {
        throw IoError("cannot write report in " + out_dir.string());
    }
    out << csv;
    std::cout << csv;
}

EvalReport final_report(const UNetPPModel& model, const std::vector<PairedSample>& val_set,
                        double norm_lo, double norm_hi) {
    MetricConfig mc;
    mc.psnr_peak = norm_hi - norm_lo;
    mc.ssim_dynamic_range = norm_hi - norm_lo;
    MethodScores lf{"LF MRI", {}, {}};
    MethodScores sr{method_label(model.config), {}, {}};
    for (const auto& s : val_set) {
        lf.psnr_values.push_back(psnr(s.lf_bilinear, s.hf, mc));
        lf.ssim_values.push_back(ssim(s.lf_bilinear, s.hf, mc));
        const Tensor out = super_resolve(model, s.lf_bilinear, static_cast<scalar>(norm_lo),
                                         static_cast<scalar>(norm_hi));
        sr.psnr_values.push_back(psnr(out, s.hf, mc));
        sr.ssim_values.push_back(ssim(out, s.hf, mc));
    }
    return summarize({lf, sr});
}

int cmd_train(const RunConfig& cfg, const fs::path& resume_path, bool verbose) {
    if (cfg.data_dir.empty()) {
        throw UsageError("train needs a dataset: set paths.data_dir in the config or pass --in");
    }
    const fs::path out_dir = cfg.out_dir.empty() ? fs::path("run") : cfg.out_dir;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
        throw IoError("cannot create output directory " + out_dir.string() +
                      (ec ? ": " + ec.message() : ""));
    }

    const auto samples = load_paired_dir(cfg.data_dir);
    auto [train_set, val_set] = split_dataset(samples, cfg.seed);

    UNetPPModel model = UNetPPModel::create(cfg.model, derive_seed(cfg.seed, 101));
    TrainState state;
    TrainConfig train_cfg = cfg.train;
    if (!resume_path.empty()) {
        LoadedRun run = load_checkpoint(resume_path);
        model = std::move(run.model);
        state = std::move(run.state);
        // The current config stays authoritative for the step target, so a
        // resumed run can extend past the checkpointed horizon.
    }

    TrainIO io;
    io.out_dir = out_dir;
    io.verbose = verbose;
    io.on_checkpoint = [&](std::int64_t step) {
        char name[48];
        std::snprintf(name, sizeof(name), "checkpoint_%08lld.nusr", static_cast<long long>(step));
        save_checkpoint(model, state, train_cfg, out_dir / name);
    };
    // Best-model selection on validation PSNR: the reported model is the best
    // validation snapshot, not necessarily the last step (a resumed run keeps
    // competing against the restored best).
    double best_psnr = state.best_val_psnr;
    const fs::path best_path = out_dir / "checkpoint_best.nusr";
    io.on_validate = [&](std::int64_t /*step*/, double val_psnr, double /*val_ssim*/) {
        if (val_psnr >= best_psnr) {
            best_psnr = val_psnr;
            save_checkpoint(model, state, train_cfg, best_path);
        }
    };
    train(model, train_set, val_set, train_cfg, state, io);
    save_checkpoint(model, state, train_cfg, out_dir / "checkpoint_final.nusr");

    const UNetPPModel* report_model = &model;
    LoadedRun best_run;
    if (fs::exists(best_path)) {
        best_run = load_checkpoint(best_path);
        report_model = &best_run.model;
    }
    write_report(final_report(*report_model, val_set, train_cfg.norm_lo, train_cfg.norm_hi),
                 out_dir);
    return 0;
}

// ---- infer ----

int cmd_infer(const fs::path& checkpoint_path, const fs::path& in_path, const fs::path& out_path,
              std::int64_t up_width, std::int64_t up_height) {
    LoadedRun run = load_checkpoint(checkpoint_path);
    Tensor input = read_image(in_path);
    if (up_width > 0 || up_height > 0) {
        const std::int64_t w = up_width > 0 ? up_width : input.dim(3);
        const std::int64_t h = up_height > 0 ? up_height : input.dim(2);
        input = bilinear_resize(input, w, h);
    }
    const double lo = run.train_cfg.norm_lo, hi = run.train_cfg.norm_hi;
    const auto [normed, params] = normalize_or_midpoint(input, lo, hi);
    const Tensor sr =
        super_resolve(run.model, normed, static_cast<scalar>(lo), static_cast<scalar>(hi));
    write_image(denormalize(sr, params), out_path);
    return 0;
}

// ---- eval ----

int cmd_eval(const RunConfig& cfg, const fs::path& pred_dir, const fs::path& gt_dir,
             const std::string& label, const fs::path& out_csv) {
    const auto pred_files = list_images(pred_dir);
    const auto gt_files = list_images(gt_dir);

    std::map<std::string, fs::path> pred_by_name, gt_by_name;
    for (const auto& p : pred_files) pred_by_name[p.filename().string()] = p;
    for (const auto& p : gt_files) gt_by_name[p.filename().string()] = p;

    std::vector<std::string> unmatched;
    for (const auto& [name, p] : pred_by_name) {
        if (!gt_by_name.count(name)) unmatched.push_back(name + " (only in " + pred_dir.string() + ")");
    }
    for (const auto& [name, p] : gt_by_name) {
        if (!pred_by_name.count(name)) unmatched.push_back(name + " (only in " + gt_dir.string() + ")");
    }
    if (!unmatched.empty()) {
        for (const auto& u : unmatched) std::cerr << "unmatched: " << u << "\n";
        throw DomainError(std::to_string(unmatched.size()) +
                          " file(s) lack a same-named partner across the two directories");
    }
    if (pred_by_name.empty()) {
        throw DomainError("no images to evaluate: the directories share no filenames");
    }

    MethodScores scores{label, {}, {}};
    std::string per_image = "name,psnr,ssim\n";
    char buf[160];
    for (const auto& [name, pred_path] : pred_by_name) {
        const Tensor pred = read_image(pred_path);
        const Tensor gt = read_image(gt_by_name.at(name));
        const double p = psnr(pred, gt, cfg.metrics);
        const double s = ssim(pred, gt, cfg.metrics);
        scores.psnr_values.push_back(p);
        scores.ssim_values.push_back(s);
        if (std::isinf(p)) {
            std::snprintf(buf, sizeof(buf), "%s,inf,%.6f", name.c_str(), s);
        } else {
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f", name.c_str(), p, s);
        }
        per_image += buf;
        per_image += '\n';
    }
    const EvalReport report = summarize({scores});
    const std::string csv = report.to_csv();
    std::cout << csv;
    if (!out_csv.empty()) {
        std::ofstream out(out_csv, std::ios::trunc);
        if (!out) {
            throw IoError("cannot write report to " + out_csv.string());
        }
        out << csv;
        std::ofstream per(out_csv.string() + ".per_image.csv", std::ios::trunc);
        if (per) per << per_image;
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Synthetic low-field MRI super-resolution toolkit"};
    app.require_subcommand(1);
    // Let `nusr degrade --seed 7` resolve --seed against the global options.
    app.fallthrough();

    std::uint64_t seed = 0;
    std::string config_path;
    std::string out_path;
    bool verbose = false;
    CLI::Option* seed_opt = app.add_option("--seed", seed, "Run seed (drives every stage)");
    app.add_option("--config", config_path, "Run configuration file (key = value lines)");
    CLI::Option* out_opt =
        app.add_option("--out", out_path, "Output directory (file path for `infer`/`eval`)");
    app.add_flag("--verbose", verbose, "Progress logging to stderr");

    // phantom
    auto* sc_phantom = app.add_subcommand("phantom", "Generate synthetic head phantoms");
    PhantomArgs ph;
    sc_phantom->add_option("--count", ph.spec.count, "Number of phantoms");
    sc_phantom->add_option("--size", ph.spec.size, "Image side length in pixels");
    sc_phantom->add_option("--min-ellipses", ph.spec.min_ellipses, "Fewest inner structures");
    sc_phantom->add_option("--max-ellipses", ph.spec.max_ellipses, "Most inner structures");
    bool no_texture = false;
    sc_phantom->add_flag("--no-texture", no_texture, "Disable the smooth shading gradient");
    sc_phantom->add_option("--edge-softness", ph.spec.edge_softness_px,
                           "Tissue boundary feathering width in pixels");
    sc_phantom->add_option("--divisor", ph.spec.level_divisor,
                           "Required divisibility of the size (model downsampling depth)");

    // degrade
    auto* sc_degrade = app.add_subcommand("degrade", "Create paired HF/LF/residual samples");
    std::string degrade_in;
    sc_degrade->add_option("--in", degrade_in, "Directory of input images")->required();
    double factor_h = 0, factor_v = 0;
    std::int64_t inter_w = 0, inter_h = 0, out_w = 0, out_h = 0;
    bool augment_flag = false;
    CLI::Option* fh_opt = sc_degrade->add_option("--factor-horizontal", factor_h,
                                                 "Width downsampling factor");
    CLI::Option* fv_opt = sc_degrade->add_option("--factor-vertical", factor_v,
                                                 "Height downsampling factor");
    CLI::Option* iw_opt = sc_degrade->add_option("--intermediate-width", inter_w,
                                                 "Explicit intermediate width");
    CLI::Option* ih_opt = sc_degrade->add_option("--intermediate-height", inter_h,
                                                 "Explicit intermediate height");
    CLI::Option* ow_opt = sc_degrade->add_option("--output-width", out_w, "Expected input/output width");
    CLI::Option* oh_opt = sc_degrade->add_option("--output-height", out_h, "Expected input/output height");
    sc_degrade->add_flag("--augment", augment_flag, "Apply training augmentation before degrading");

    // train
    auto* sc_train = app.add_subcommand("train", "Train the residual model on a paired dataset");
    std::string train_in;
    std::string resume;
    sc_train->add_option("--in", train_in, "Paired dataset directory (overrides paths.data_dir)");
    sc_train->add_option("--resume", resume, "Checkpoint to continue from");

    // infer
    auto* sc_infer = app.add_subcommand("infer", "Super-resolve one image with a checkpoint");
    std::string infer_ckpt, infer_in;
    std::int64_t up_w = 0, up_h = 0;
    sc_infer->add_option("--checkpoint", infer_ckpt, "Model checkpoint")->required();
    sc_infer->add_option("--in", infer_in, "Input image (.fgrd or .png)")->required();
    sc_infer->add_option("--width", up_w, "Bilinearly upsample the input to this width first");
    sc_infer->add_option("--height", up_h, "Bilinearly upsample the input to this height first");

    // eval
    auto* sc_eval = app.add_subcommand("eval", "Score predictions against ground truth");
    std::string eval_pred, eval_gt, eval_label = "pred";
    double eval_peak = 0;
    sc_eval->add_option("--pred", eval_pred, "Directory of predicted images")->required();
    sc_eval->add_option("--gt", eval_gt, "Directory of ground-truth images")->required();
    sc_eval->add_option("--label", eval_label, "Method label for the report row");
    CLI::Option* peak_opt =
        sc_eval->add_option("--peak", eval_peak, "Explicit PSNR peak / SSIM dynamic range");

    try {
        app.parse(argc, argv);

        RunConfig cfg;
        if (!config_path.empty()) {
            cfg = load_run_config(config_path);
        }
        if (seed_opt->count() > 0 || config_path.empty()) {
            cfg.seed = seed;
            cfg.degrade.seed = seed;
            cfg.train.seed = seed;
        }
        if (out_opt->count() > 0) {
            cfg.out_dir = out_path;
        }

        if (sc_phantom->parsed()) {
            PhantomArgs args = ph;
            args.spec.seed = cfg.seed;
            args.spec.texture = !no_texture;
            const fs::path dir = cfg.out_dir.empty() ? fs::path(".") : cfg.out_dir;
            return cmd_phantom(args, dir);
        }
        if (sc_degrade->parsed()) {
            if (fh_opt->count()) cfg.degrade.factor_horizontal = factor_h;
            if (fv_opt->count()) cfg.degrade.factor_vertical = factor_v;
            if (iw_opt->count()) cfg.degrade.intermediate_width = inter_w;
            if (ih_opt->count()) cfg.degrade.intermediate_height = inter_h;
            if (ow_opt->count()) cfg.degrade.output_width = out_w;
            if (oh_opt->count()) cfg.degrade.output_height = out_h;
            if (augment_flag && !cfg.degrade.augment) {
                cfg.degrade.augment = AugmentSpec{};
            }
            if (cfg.out_dir.empty()) {
                throw UsageError("degrade needs an output directory: pass --out");
            }
            return cmd_degrade(cfg, degrade_in, cfg.out_dir);
        }
        if (sc_train->parsed()) {
            if (!train_in.empty()) cfg.data_dir = train_in;
            return cmd_train(cfg, resume, verbose);
        }
        if (sc_infer->parsed()) {
            if (cfg.out_dir.empty()) {
                throw UsageError("infer needs an output image path: pass --out");
            }
            return cmd_infer(infer_ckpt, infer_in, cfg.out_dir, up_w, up_h);
        }
        if (sc_eval->parsed()) {
            if (peak_opt->count()) {
                cfg.metrics.psnr_peak = eval_peak;
                cfg.metrics.ssim_dynamic_range = eval_peak;
            }
            return cmd_eval(cfg, eval_pred, eval_gt, eval_label, cfg.out_dir);
        }
        throw UsageError("no command selected");
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("nusr");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace nusr

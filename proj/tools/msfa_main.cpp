// Command-line front end for the MSFA design toolkit: optimize spectral
// sensitivities on training imagery, simulate the mosaic -> demosaic chain,
// evaluate reconstructions, and generate synthetic test cubes. Every command
// drops a manifest next to its outputs; `rerun` replays one.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "msfa/colorimetry.hpp"
#include "msfa/core.hpp"
#include "msfa/io.hpp"
#include "msfa/manifest.hpp"
#include "msfa/mosaic.hpp"
#include "msfa/optimizer.hpp"
#include "msfa/synth.hpp"
#include "msfa/version.hpp"
#include "msfa/wiener.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw msfa::io_error("cannot create output directory " + dir + ": " + ec.message());
}

std::string format_psnr(double v) {
    if (std::isinf(v)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// --- optimize ----------------------------------------------------------------

struct OptimizeParams {
    std::string train;
    std::string out;
    std::string basis; // empty: derive from the training cube
    int rows = 4;
    int cols = 4;
    int k = 8;
    int iters = 140;
    uint64_t seed = 0;
    double ridge = 1e-8;
    double inner_tol = 1e-10;
    int inner_max_steps = 200;
    bool early_stop = false;
};

json optimize_params_json(const OptimizeParams& p) {
    return json{{"train", p.train},
                {"out", p.out},
                {"basis", p.basis},
                {"rows", p.rows},
                {"cols", p.cols},
                {"k", p.k},
                {"iters", p.iters},
                {"seed", p.seed},
                {"ridge", p.ridge},
                {"inner_tol", p.inner_tol},
                {"inner_max_steps", p.inner_max_steps},
                {"early_stop", p.early_stop}};
}

OptimizeParams optimize_params_from_json(const json& j) {
    OptimizeParams p;
    p.train = j.at("train").get<std::string>();
    p.out = j.at("out").get<std::string>();
    p.basis = j.value("basis", std::string{});
    p.rows = j.at("rows").get<int>();
    p.cols = j.at("cols").get<int>();
    p.k = j.at("k").get<int>();
    p.iters = j.at("iters").get<int>();
    p.seed = j.at("seed").get<uint64_t>();
    p.ridge = j.at("ridge").get<double>();
    p.inner_tol = j.value("inner_tol", 1e-10);
    p.inner_max_steps = j.value("inner_max_steps", 200);
    p.early_stop = j.value("early_stop", false);
    return p;
}

int run_optimize(const OptimizeParams& p) {
    msfa::SpectralCube training = msfa::load_cube(p.train);

    msfa::OptimizerConfig cfg;
    cfg.iterations = p.iters;
    cfg.k = p.k;
    cfg.seed = p.seed;
    cfg.ridge_rel = p.ridge;
    cfg.inner_tolerance = p.inner_tol;
    cfg.inner_max_steps = p.inner_max_steps;
    cfg.early_stop = p.early_stop;

    msfa::EigenBasis basis = p.basis.empty()
                                 ? msfa::build_eigenbasis(training, p.k)
                                 : msfa::build_eigenbasis(msfa::load_spectra_csv(p.basis), p.k,
                                                          msfa::EigenBasis::Source::external_dataset);

    msfa::BlockGeometry geometry{p.rows, p.cols};
    msfa::OptimizeResult result = msfa::optimize(training, geometry, basis, cfg);

    ensure_dir(p.out);
    msfa::save_msfa(result.msfa, join_path(p.out, "msfa.hdr"));
    msfa::save_wiener(result.wiener, join_path(p.out, "wiener.hdr"));
    msfa::write_trace_csv(result.trace, join_path(p.out, "trace.csv"));

    msfa::RunManifest manifest;
    manifest.command = "optimize";
    manifest.parameters = optimize_params_json(p);
    manifest.add_paired_input("train", p.train, msfa::payload_path_for(p.train));
    if (!p.basis.empty()) manifest.add_input("basis", p.basis);
    msfa::save_manifest(manifest, join_path(p.out, "manifest.json"));

    std::cerr << "optimize: " << result.trace.entries.size() << " iterations, reconstruction rmse "
              << msfa::format_double(result.trace.final_full_rmse) << " (random start "
              << msfa::format_double(result.trace.initial_full_rmse) << "), outputs in " << p.out << "\n";
    return 0;
}

// --- mosaic ------------------------------------------------------------------

struct MosaicParams {
    std::string cube;
    std::string msfa;
    std::string out;
    double noise_sigma = 0.0;
    uint64_t noise_seed = 0;
};

json mosaic_params_json(const MosaicParams& p) {
    return json{{"cube", p.cube},
                {"msfa", p.msfa},
                {"out", p.out},
                {"noise_sigma", p.noise_sigma},
                {"noise_seed", p.noise_seed}};
}

MosaicParams mosaic_params_from_json(const json& j) {
    MosaicParams p;
    p.cube = j.at("cube").get<std::string>();
    p.msfa = j.at("msfa").get<std::string>();
    p.out = j.at("out").get<std::string>();
    p.noise_sigma = j.value("noise_sigma", 0.0);
    p.noise_seed = j.value("noise_seed", uint64_t{0});
    return p;
}

int run_mosaic(const MosaicParams& p) {
    msfa::SpectralCube cube = msfa::load_cube(p.cube);
    msfa::MsfaBlock block = msfa::load_msfa(p.msfa);
    msfa::MosaickedImage img = msfa::mosaic(cube, block, p.noise_sigma, p.noise_seed);

    ensure_dir(p.out);
    msfa::save_mosaic(img, join_path(p.out, "mosaic.hdr"));

    msfa::RunManifest manifest;
    manifest.command = "mosaic";
    manifest.parameters = mosaic_params_json(p);
    manifest.add_paired_input("cube", p.cube, msfa::payload_path_for(p.cube));
    manifest.add_paired_input("msfa", p.msfa, msfa::payload_path_for(p.msfa));
    msfa::save_manifest(manifest, join_path(p.out, "manifest.json"));
    return 0;
}

// --- demosaic ----------------------------------------------------------------

struct DemosaicParams {
    std::string mosaic;
    std::string wiener;
    std::string out;
};

json demosaic_params_json(const DemosaicParams& p) {
    return json{{"mosaic", p.mosaic}, {"wiener", p.wiener}, {"out", p.out}};
}

DemosaicParams demosaic_params_from_json(const json& j) {
    DemosaicParams p;
    p.mosaic = j.at("mosaic").get<std::string>();
    p.wiener = j.at("wiener").get<std::string>();
    p.out = j.at("out").get<std::string>();
    return p;
}

int run_demosaic(const DemosaicParams& p) {
    msfa::MosaickedImage img = msfa::load_mosaic(p.mosaic);
    msfa::WienerMatrix w = msfa::load_wiener(p.wiener);
    msfa::SpectralCube estimate = msfa::demosaic(img, w);

    // The cube file format represents [0, 1] only; clip the written copy.
    long clipped = 0;
    for (double& v : estimate.data) {
        if (v < 0.0) {
            v = 0.0;
            ++clipped;
        } else if (v > 1.0) {
            v = 1.0;
            ++clipped;
        }
    }
    if (clipped > 0)
        std::cerr << "note: " << clipped << " reconstructed samples clipped to [0, 1] for the cube file\n";

    ensure_dir(p.out);
    msfa::save_cube(estimate, join_path(p.out, "estimate.hdr"));

    msfa::RunManifest manifest;
    manifest.command = "demosaic";
    manifest.parameters = demosaic_params_json(p);
    manifest.add_paired_input("mosaic", p.mosaic, msfa::payload_path_for(p.mosaic));
    manifest.add_paired_input("wiener", p.wiener, msfa::payload_path_for(p.wiener));
    msfa::save_manifest(manifest, join_path(p.out, "manifest.json"));
    return 0;
}

// --- evaluate ----------------------------------------------------------------

struct EvaluateParams {
    std::string reference;
    std::string estimate; // either this ...
    std::string msfa;     // ... or msfa + wiener to run the chain
    std::string wiener;
    std::string cmf; // optional external color table
    std::string out;
};

json evaluate_params_json(const EvaluateParams& p) {
    return json{{"reference", p.reference}, {"estimate", p.estimate}, {"msfa", p.msfa},
                {"wiener", p.wiener},       {"cmf", p.cmf},           {"out", p.out}};
}

EvaluateParams evaluate_params_from_json(const json& j) {
    EvaluateParams p;
    p.reference = j.at("reference").get<std::string>();
    p.estimate = j.value("estimate", std::string{});
    p.msfa = j.value("msfa", std::string{});
    p.wiener = j.value("wiener", std::string{});
    p.cmf = j.value("cmf", std::string{});
    p.out = j.at("out").get<std::string>();
    return p;
}

// The paper-style protocol evaluates on the training image itself; that is
// allowed but worth a caution. Detected by comparing the reference checksum
// with the training input recorded in the manifest sitting next to the
// filter-array file.
void warn_if_reference_is_training(const std::string& msfa_path, const std::string& reference_path) {
    fs::path sibling = fs::path(msfa_path).parent_path() / "manifest.json";
    std::error_code ec;
    if (!fs::exists(sibling, ec)) return;
    try {
        msfa::RunManifest m = msfa::load_manifest(sibling.string());
        auto it = m.inputs.find("train");
        if (it != m.inputs.end() &&
            it->second.fnv1a64 ==
                msfa::fnv1a64_files({reference_path, msfa::payload_path_for(reference_path)}))
            std::cerr << "caution: reference equals the optimizer's training image; "
                         "scores measure training fit, not generalization\n";
    } catch (const std::exception&) {
        // A foreign or damaged sibling manifest is not an error here.
    }
}

int run_evaluate(const EvaluateParams& p) {
    const bool chain_mode = !p.msfa.empty();
    if (chain_mode == !p.estimate.empty())
        throw msfa::validation_error("evaluate: supply either --estimate or --msfa with --wiener");
    if (chain_mode && p.wiener.empty())
        throw msfa::validation_error("evaluate: chain mode needs both --msfa and --wiener");

    msfa::SpectralCube reference = msfa::load_cube(p.reference);
    msfa::ColorMatchingTable cmf = p.cmf.empty() ? msfa::cie1931_d65_10nm() : msfa::load_cmf_csv(p.cmf);

    std::optional<msfa::MsfaBlock> block;
    msfa::SpectralCube estimate;
    if (chain_mode) {
        block = msfa::load_msfa(p.msfa);
        msfa::WienerMatrix w = msfa::load_wiener(p.wiener);
        warn_if_reference_is_training(p.msfa, p.reference);
        estimate = msfa::demosaic(msfa::mosaic(reference, *block), w);
    } else {
        estimate = msfa::load_cube(p.estimate);
    }

    double psnr_m = msfa::psnr_msi(reference, estimate);
    msfa::RgbImage ref_rgb = msfa::cube_to_srgb(reference, cmf);
    msfa::RgbImage est_rgb = msfa::cube_to_srgb(estimate, cmf);
    double psnr_r = msfa::psnr_rgb(ref_rgb, est_rgb);

    ensure_dir(p.out);
    msfa::write_ppm(ref_rgb, join_path(p.out, "reference.ppm"));
    msfa::write_ppm(est_rgb, join_path(p.out, "estimate.ppm"));
    msfa::write_average_spectrum_csv(reference.wavelengths, msfa::average_spectrum(reference),
                                     msfa::average_spectrum(estimate),
                                     join_path(p.out, "average_spectrum.csv"));
    if (block) {
        msfa::write_sensitivity_csv(*block, reference.wavelengths, join_path(p.out, "sensitivities.csv"));
        auto colors = msfa::msfa_patch_colors(*block, reference.wavelengths, cmf);
        msfa::write_ppm(msfa::patch_grid_image(colors, block->geometry), join_path(p.out, "msfa_patches.ppm"));
    }

    msfa::RunManifest manifest;
    manifest.command = "evaluate";
    manifest.parameters = evaluate_params_json(p);
    manifest.add_paired_input("reference", p.reference, msfa::payload_path_for(p.reference));
    if (!p.estimate.empty()) manifest.add_paired_input("estimate", p.estimate, msfa::payload_path_for(p.estimate));
    if (!p.msfa.empty()) manifest.add_paired_input("msfa", p.msfa, msfa::payload_path_for(p.msfa));
    if (!p.wiener.empty()) manifest.add_paired_input("wiener", p.wiener, msfa::payload_path_for(p.wiener));
    if (!p.cmf.empty()) manifest.add_input("cmf", p.cmf);
    msfa::save_manifest(manifest, join_path(p.out, "manifest.json"));

    std::cout << "psnr_msi_db = " << format_psnr(psnr_m) << "\n";
    std::cout << "psnr_rgb_db = " << format_psnr(psnr_r) << "\n";
    return 0;
}

// --- synth -------------------------------------------------------------------

struct SynthParams {
    int height = 0;
    int width = 0;
    int bands = 0;
    int rank = 1;
    uint64_t seed = 0;
    double noise = 0.0;
    std::string out;
};

json synth_params_json(const SynthParams& p) {
    return json{{"height", p.height}, {"width", p.width}, {"bands", p.bands}, {"rank", p.rank},
                {"seed", p.seed},     {"noise", p.noise}, {"out", p.out}};
}

SynthParams synth_params_from_json(const json& j) {
    SynthParams p;
    p.height = j.at("height").get<int>();
    p.width = j.at("width").get<int>();
    p.bands = j.at("bands").get<int>();
    p.rank = j.at("rank").get<int>();
    p.seed = j.at("seed").get<uint64_t>();
    p.noise = j.value("noise", 0.0);
    p.out = j.at("out").get<std::string>();
    return p;
}

int run_synth(const SynthParams& p) {
    msfa::SpectralCube cube = msfa::synth_cube(p.height, p.width, p.bands, p.rank, p.seed, p.noise);
    fs::path out(p.out);
    if (out.has_parent_path()) ensure_dir(out.parent_path().string());
    msfa::save_cube(cube, p.out);

    msfa::RunManifest manifest;
    manifest.command = "synth";
    manifest.parameters = synth_params_json(p);
    std::string stem = msfa::payload_path_for(p.out);
    stem = stem.substr(0, stem.size() - 4); // drop ".raw"
    msfa::save_manifest(manifest, stem + ".manifest.json");
    return 0;
}

// --- rerun -------------------------------------------------------------------

int run_from_manifest(const msfa::RunManifest& m, const std::string& out_override) {
    const json& params = m.parameters;
    if (m.command == "optimize") {
        OptimizeParams p = optimize_params_from_json(params);
        if (!out_override.empty()) p.out = out_override;
        return run_optimize(p);
    }
    if (m.command == "mosaic") {
        MosaicParams p = mosaic_params_from_json(params);
        if (!out_override.empty()) p.out = out_override;
        return run_mosaic(p);
    }
    if (m.command == "demosaic") {
        DemosaicParams p = demosaic_params_from_json(params);
        if (!out_override.empty()) p.out = out_override;
        return run_demosaic(p);
    }
    if (m.command == "evaluate") {
        EvaluateParams p = evaluate_params_from_json(params);
        if (!out_override.empty()) p.out = out_override;
        return run_evaluate(p);
    }
    if (m.command == "synth") {
        SynthParams p = synth_params_from_json(params);
        if (!out_override.empty()) p.out = out_override;
        return run_synth(p);
    }
    throw msfa::validation_error("rerun: unknown command '" + m.command + "' in manifest");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MSFA spectral sensitivity design and demosaicking toolkit"};
    app.set_version_flag("--version", std::string("msfa ") + msfa::kVersion);
    app.require_subcommand(1);

    OptimizeParams op;
    CLI::App* opt = app.add_subcommand("optimize", "Optimize filter-array sensitivities on a training cube");
    opt->add_option("--train", op.train, "Training cube header file")->required();
    opt->add_option("--rows", op.rows, "Block rows")->capture_default_str();
    opt->add_option("--cols", op.cols, "Block columns")->capture_default_str();
    opt->add_option("--k", op.k, "Eigenvector count for the reduced objective")->capture_default_str();
    opt->add_option("--iters", op.iters, "Alternating iterations")->capture_default_str();
    opt->add_option("--seed", op.seed, "RNG seed for the random start")->capture_default_str();
    opt->add_option("--ridge", op.ridge, "Relative Tikhonov weight for the Wiener solve (0 = bare inverse)")
        ->capture_default_str();
    opt->add_option("--basis", op.basis, "Spectral sample table (CSV) for the eigenbasis; default: training cube");
    opt->add_option("--inner-tol", op.inner_tol, "KKT tolerance of the constrained subproblem")
        ->capture_default_str();
    opt->add_option("--inner-max-steps", op.inner_max_steps, "Step cap of the constrained subproblem")
        ->capture_default_str();
    opt->add_flag("--early-stop", op.early_stop, "Stop when the objective stalls for 5 iterations");
    opt->add_option("--out", op.out, "Output directory")->required();

    MosaicParams mp;
    CLI::App* mos = app.add_subcommand("mosaic", "Apply a filter array to a cube");
    mos->add_option("--cube", mp.cube, "Input cube header file")->required();
    mos->add_option("--msfa", mp.msfa, "Filter-array block file")->required();
    mos->add_option("--noise-sigma", mp.noise_sigma, "Additive white Gaussian noise level")->capture_default_str();
    mos->add_option("--noise-seed", mp.noise_seed, "Noise RNG seed")->capture_default_str();
    mos->add_option("--out", mp.out, "Output directory")->required();

    DemosaicParams dp;
    CLI::App* dem = app.add_subcommand("demosaic", "Reconstruct a cube from a mosaicked image");
    dem->add_option("--mosaic", dp.mosaic, "Mosaicked image header file")->required();
    dem->add_option("--wiener", dp.wiener, "Wiener matrix file")->required();
    dem->add_option("--out", dp.out, "Output directory")->required();

    EvaluateParams ep;
    CLI::App* eva = app.add_subcommand("evaluate", "Score a reconstruction and export figure data");
    eva->add_option("--reference", ep.reference, "Reference cube header file")->required();
    eva->add_option("--estimate", ep.estimate, "Estimate cube header file");
    eva->add_option("--msfa", ep.msfa, "Filter-array file (runs the mosaic -> demosaic chain)");
    eva->add_option("--wiener", ep.wiener, "Wiener matrix file for chain mode");
    eva->add_option("--cmf", ep.cmf, "Color matching table CSV (default: built-in CIE 1931 / D65)");
    eva->add_option("--out", ep.out, "Output directory")->required();

    SynthParams sp;
    CLI::App* syn = app.add_subcommand("synth", "Generate a synthetic low-rank test cube");
    syn->add_option("--height", sp.height, "Image height")->required();
    syn->add_option("--width", sp.width, "Image width")->required();
    syn->add_option("--bands", sp.bands, "Band count")->required();
    syn->add_option("--rank", sp.rank, "Spectral subspace dimension")->capture_default_str();
    syn->add_option("--seed", sp.seed, "RNG seed")->capture_default_str();
    syn->add_option("--noise", sp.noise, "Gaussian noise sigma added per sample")->capture_default_str();
    syn->add_option("--out", sp.out, "Output cube header file")->required();

    std::string rerun_manifest, rerun_out;
    CLI::App* rer = app.add_subcommand("rerun", "Re-execute a command from its manifest");
    rer->add_option("--manifest", rerun_manifest, "Manifest file")->required();
    rer->add_option("--out", rerun_out, "Override the recorded output location");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*opt) return run_optimize(op);
        if (*mos) return run_mosaic(mp);
        if (*dem) return run_demosaic(dp);
        if (*eva) return run_evaluate(ep);
        if (*syn) return run_synth(sp);
        if (*rer) return run_from_manifest(msfa::load_manifest(rerun_manifest), rerun_out);
        return 1;
    } catch (const msfa::numerical_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

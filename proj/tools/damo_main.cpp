// Command-line surface: weight-matrix export, synthetic dataset generation,
// training, evaluation, gradient checking, inference, and the ablation table.
//
// Exit codes: 0 success, 2 usage/input error, 3 numeric-domain error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "damo/gradcheck.hpp"
#include "damo/io.hpp"
#include "damo/metrics.hpp"
#include "damo/scene.hpp"
#include "damo/trainer.hpp"

namespace fs = std::filesystem;
using namespace damo;

namespace {

int cmd_weights(int height, int width, bool normalize, const std::string& out) {
    const WeightMatrix wm = spherical_weight_matrix(height, width, normalize);
    write_pfm(out, wm.grid);
    std::cout << "wrote " << out << " (" << height << "x" << width << ")\n";
    return 0;
}

int cmd_synth(std::uint64_t seed, int count, int height, const std::string& out_dir) {
    if (height < 2 || height % 2 != 0) {
        throw UsageError("--height must be even and >= 2");
    }
    if (count < 1) {
        throw UsageError("--count must be >= 1");
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create " + out_dir + ": " + ec.message());
    }

    DatasetManifest manifest;
    manifest.height = height;
    manifest.width = 2 * height;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t scene_seed = seed + std::uint64_t(i);
        const Scene scene = random_scene(scene_seed);
        RenderResult r = render(scene, height, 2 * height);
        const std::string rgb_name = "scene_" + std::to_string(i) + ".ppm";
        const std::string depth_name = "scene_" + std::to_string(i) + ".pfm";
        write_ppm(out_dir + "/" + rgb_name, r.rgb);
        write_pfm(out_dir + "/" + depth_name, r.depth.depth);
        manifest.scenes.push_back({scene_seed, rgb_name, depth_name});
    }
    write_manifest(out_dir + "/manifest.json", manifest);
    std::cout << "wrote " << count << " scene pairs to " << out_dir << "\n";
    return 0;
}

DamoConfig model_config_from_flags(int height, int spm_stages, bool deformable,
                                   bool stack_all, std::uint64_t seed) {
    DamoConfig cfg;
    cfg.height = height;
    cfg.width = 2 * height;
    cfg.spm_stages = spm_stages;
    cfg.use_deformable = deformable;
    cfg.spm_stack_all = stack_all;
    cfg.seed = seed;
    return cfg;
}

int cmd_train(const std::string& data_dir, int height, int epochs, int batch, double lr,
              const std::string& weighting, int spm_stages, bool deformable,
              bool stack_all, std::uint64_t seed, const std::string& out,
              std::string history_path) {
    const DatasetManifest manifest = read_manifest(data_dir + "/manifest.json");
    if (manifest.height != height) {
        throw UsageError("--height " + std::to_string(height) +
                         " does not match the dataset height " +
                         std::to_string(manifest.height));
    }
    const std::vector<TrainSample> data = load_dataset(data_dir);

    DamoConfig mc = model_config_from_flags(height, spm_stages, deformable, stack_all, seed);
    validate_config(mc);

    TrainConfig tc;
    tc.base_lr = lr;
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.seed = seed;
    tc.weighting = weighting == "uniform" ? Weighting::Uniform : Weighting::Spherical;

    TrainResult result = train(ModelState::build(mc), data, tc);
    save_checkpoint(out, result.model);
    if (history_path.empty()) history_path = out + ".loss.csv";
    write_loss_csv(history_path, result.history);

    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", result.history.back().mean_loss);
    std::cout << "final_loss " << buf << "\n";
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& mask_path, bool no_median_scale) {
    MaskedDepthPair pair;
    pair.pred = read_pfm(pred_path);
    pair.gt = read_pfm(gt_path);
    if (pair.pred.shape() != pair.gt.shape()) {
        throw ShapeError("prediction and ground truth dims differ");
    }
    pair.mask = mask_path.empty() ? Tensor2(pair.pred.h(), pair.pred.w(), 1.0)
                                  : read_pfm(mask_path);

    const MetricReport r = compute_metrics(pair, !no_median_scale);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.rmse,
                  r.abs_rel, r.rmse_log, r.delta1, r.delta2, r.delta3, r.scale);
    std::cout << "rmse,abs_rel,rmse_log,delta1,delta2,delta3,scale\n" << buf << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& op, int cases) {
    const std::vector<GradCheckResult> results = run_gradcheck(op, seed, cases);
    bool all_pass = true;
    for (const GradCheckResult& r : results) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-16s cases=%-3d worst_rel_err=%.3e tol=%.0e %s",
                      r.op.c_str(), r.cases, r.worst_rel_err, r.tolerance,
                      r.passed ? "PASS" : "FAIL");
        std::cout << buf << "\n";
        all_pass = all_pass && r.passed;
    }
    return all_pass ? 0 : 1;
}

int cmd_infer(const std::string& ckpt, const std::string& rgb_path,
              const std::string& out) {
    const ModelState model = load_checkpoint(ckpt);
    const Tensor4 rgb = read_ppm(rgb_path);
    if (rgb.h() != model.config().height || rgb.w() != model.config().width) {
        throw ShapeError("image dims do not match the checkpoint config");
    }
    const ForwardResult fwd = forward(model, rgb);
    write_pfm(out, squeeze2(fwd.depth));
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_ablate(const std::string& data_dir, int height, int epochs, int batch, double lr,
               std::uint64_t seed, const std::string& out_csv) {
    const DatasetManifest manifest = read_manifest(data_dir + "/manifest.json");
    if (manifest.height != height) {
        throw UsageError("--height does not match the dataset height");
    }
    const std::vector<TrainSample> data = load_dataset(data_dir);

    DamoConfig mc = model_config_from_flags(height, 0, false, false, seed);
    TrainConfig tc;
    tc.base_lr = lr;
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.seed = seed;

    const std::vector<AblationRow> rows = run_ablation(mc, tc, data);
    std::cout << "variant,final_epoch_loss,uniform_berhu\n";
    std::string csv = "variant,final_epoch_loss,uniform_berhu\n";
    for (const AblationRow& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g", r.variant.c_str(),
                      r.final_epoch_loss, r.uniform_berhu);
        std::cout << buf << "\n";
        csv += buf;
        csv += "\n";
    }
    if (!out_csv.empty()) {
        std::ofstream f(out_csv);
        if (!f) {
            throw IoError("cannot open " + out_csv + " for writing");
        }
        f << csv;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distortion-aware depth estimation toolkit"};
    app.require_subcommand(1);

    // weights
    auto* weights = app.add_subcommand("weights", "export the spherical loss weight matrix");
    int w_height = 0, w_width = 0;
    bool w_normalize = false;
    std::string w_out;
    weights->add_option("--height", w_height, "grid height")->required();
    weights->add_option("--width", w_width, "grid width")->required();
    weights->add_flag("--normalize", w_normalize, "rescale to unit mean");
    weights->add_option("--out", w_out, "output PFM path")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "render a synthetic RGB-D dataset");
    std::uint64_t s_seed = 0;
    int s_count = 1, s_height = 32;
    std::string s_out;
    synth->add_option("--seed", s_seed, "base seed")->required();
    synth->add_option("--count", s_count, "number of scenes")->required();
    synth->add_option("--height", s_height, "image height (width is 2x)")->required();
    synth->add_option("--out", s_out, "output directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train the toy network");
    std::string t_data, t_weighting = "spherical", t_out, t_history;
    int t_height = 32, t_epochs = 1, t_batch = 4, t_spm = 3;
    double t_lr = 1e-4;
    bool t_deformable = true, t_stack_all = false;
    std::uint64_t t_seed = 0;
    train_cmd->add_option("--data", t_data, "dataset directory")->required();
    train_cmd->add_option("--height", t_height, "image height")->required();
    train_cmd->add_option("--epochs", t_epochs, "training epochs")->required();
    train_cmd->add_option("--batch", t_batch, "batch size");
    train_cmd->add_option("--lr", t_lr, "base learning rate");
    train_cmd->add_option("--weighting", t_weighting, "loss weighting")
        ->check(CLI::IsMember({"spherical", "uniform"}));
    train_cmd->add_option("--spm-stages", t_spm, "stages that end in an SPM");
    train_cmd->add_flag("--deformable,!--no-deformable", t_deformable,
                        "use deformable sampling in the last encoder blocks");
    train_cmd->add_flag("--stack-all-spm", t_stack_all, "SPM after every block");
    train_cmd->add_option("--seed", t_seed, "model init and shuffle seed")->required();
    train_cmd->add_option("--out", t_out, "checkpoint path")->required();
    train_cmd->add_option("--history", t_history, "loss CSV path (default <out>.loss.csv)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "depth metrics for a prediction");
    std::string e_pred, e_gt, e_mask;
    bool e_no_scale = false;
    eval_cmd->add_option("--pred", e_pred, "predicted depth PFM")->required();
    eval_cmd->add_option("--gt", e_gt, "ground-truth depth PFM")->required();
    eval_cmd->add_option("--mask", e_mask, "validity mask PFM");
    eval_cmd->add_flag("--no-median-scale", e_no_scale, "skip median scaling");

    // gradcheck
    auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every backward");
    std::uint64_t g_seed = 1;
    std::string g_op;
    int g_cases = 20;
    grad->add_option("--seed", g_seed, "case seed");
    grad->add_option("--op", g_op, "check a single op");
    grad->add_option("--cases", g_cases, "random cases per op");

    // infer
    auto* infer = app.add_subcommand("infer", "run a checkpoint on one image");
    std::string i_ckpt, i_rgb, i_out;
    infer->add_option("--ckpt", i_ckpt, "checkpoint path")->required();
    infer->add_option("--rgb", i_rgb, "input PPM")->required();
    infer->add_option("--out", i_out, "output depth PFM")->required();

    // ablate
    auto* ablate = app.add_subcommand("ablate", "train the four ablation variants");
    std::string a_data, a_out;
    int a_height = 32, a_epochs = 1, a_batch = 4;
    double a_lr = 1e-3;
    std::uint64_t a_seed = 0;
    ablate->add_option("--data", a_data, "dataset directory")->required();
    ablate->add_option("--height", a_height, "image height")->required();
    ablate->add_option("--epochs", a_epochs, "training epochs")->required();
    ablate->add_option("--batch", a_batch, "batch size");
    ablate->add_option("--lr", a_lr, "base learning rate");
    ablate->add_option("--seed", a_seed, "shared seed")->required();
    ablate->add_option("--out", a_out, "table CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (weights->parsed()) return cmd_weights(w_height, w_width, w_normalize, w_out);
        if (synth->parsed()) return cmd_synth(s_seed, s_count, s_height, s_out);
        if (train_cmd->parsed()) {
            return cmd_train(t_data, t_height, t_epochs, t_batch, t_lr, t_weighting, t_spm,
                             t_deformable, t_stack_all, t_seed, t_out, t_history);
        }
        if (eval_cmd->parsed()) return cmd_eval(e_pred, e_gt, e_mask, e_no_scale);
        if (grad->parsed()) return cmd_gradcheck(g_seed, g_op, g_cases);
        if (infer->parsed()) return cmd_infer(i_ckpt, i_rgb, i_out);
        if (ablate->parsed()) {
            return cmd_ablate(a_data, a_height, a_epochs, a_batch, a_lr, a_seed, a_out);
        }
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

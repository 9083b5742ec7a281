#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "transfuse/dataset.hpp"
#include "transfuse/destruct.hpp"
#include "transfuse/fuse.hpp"
#include "transfuse/image_io.hpp"
#include "transfuse/metrics.hpp"
#include "transfuse/run_config.hpp"
#include "transfuse/trainer.hpp"

namespace {

using namespace transfuse;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> disable;
};

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg = opts.config_path.empty() ? default_run_config()
                                             : load_run_config(opts.config_path);
    if (opts.seed) cfg.train.seed = *opts.seed;
    for (const std::string& d : opts.disable) {
        if (d == "nl") {
            cfg.train.transform.enable_nonlinear = false;
        } else if (d == "b") {
            cfg.train.transform.enable_brightness = false;
        } else if (d == "ns") {
            cfg.train.transform.enable_noise = false;
        } else {
            throw ConfigError("--disable expects nl, b or ns (got '" + d + "')");
        }
    }
    return cfg;
}

void apply_force(TransformSpec& spec, const std::string& force) {
    spec.prob_nonlinear = 0.0;
    spec.prob_brightness = 0.0;
    spec.prob_noise = 0.0;
    std::size_t start = 0;
    while (start <= force.size()) {
        const std::size_t plus = force.find('+', start);
        const std::string tok =
            force.substr(start, plus == std::string::npos ? std::string::npos : plus - start);
        if (tok == "nl") {
            spec.prob_nonlinear = 1.0;
        } else if (tok == "b") {
            spec.prob_brightness = 1.0;
        } else if (tok == "ns") {
            spec.prob_noise = 1.0;
        } else if (!tok.empty()) {
            throw ConfigError("--force expects tokens nl, b, ns joined by '+' (got '" + tok + "')");
        }
        if (plus == std::string::npos) break;
        start = plus + 1;
    }
}

void write_record_sidecar(const DestructionRecord& record, const std::filesystem::path& path) {
    nlohmann::json entries = nlohmann::json::array();
    for (const DestructionEntry& e : record.entries) {
        entries.push_back({{"top", e.region.top},
                           {"left", e.region.left},
                           {"height", e.region.height},
                           {"width", e.region.width},
                           {"nonlinear", e.nonlinear},
                           {"bezier_p2", {e.bezier_p2[0], e.bezier_p2[1]}},
                           {"bezier_p3", {e.bezier_p3[0], e.bezier_p3[1]}},
                           {"bezier_decreasing", e.bezier_decreasing},
                           {"brightness", e.brightness},
                           {"gamma", e.gamma},
                           {"noise", e.noise},
                           {"sigma", e.sigma}});
    }
    const nlohmann::json doc = {{"n_subregions", record.entries.size()}, {"entries", entries}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write sidecar: " + path.string());
    out << doc.dump(2) << "\n";
}

int run_train(const CommonOpts& common, const std::string& data_dir, const std::string& out_dir,
              std::optional<int> epochs, std::optional<int> image_size, bool no_transformer) {
    RunConfig cfg = resolve_config(common);
    if (epochs) cfg.train.epochs = *epochs;
    if (image_size) {
        cfg.train.image_size = *image_size;
        cfg.train.model.patch.image_size = *image_size;
    }
    if (no_transformer) cfg.train.model.with_transformer = false;

    const DatasetManifest manifest = scan_dataset(data_dir, cfg.train.image_size);
    for (const auto& skipped : manifest.skipped)
        std::cerr << "warning: skipping undecodable file " << skipped << "\n";

    const TrainResult result = train(manifest, cfg.train, out_dir);
    std::cout << "trained " << result.log.steps.size() << " steps, checkpoint at "
              << result.checkpoint_path.string() << "\n";
    return kExitOk;
}

int run_destroy(const CommonOpts& common, const std::string& image_path,
                const std::string& out_path, const std::string& force,
                std::optional<int> image_size) {
    RunConfig cfg = resolve_config(common);
    if (!force.empty()) apply_force(cfg.train.transform, force);

    Image img = load_image(image_path);
    if (image_size) img = preprocess(img, *image_size);

    Rng rng(Rng::stream_seed(cfg.train.seed, "destroy"));
    auto [destroyed, record] = destroy(img, cfg.train.transform, rng);
    save_image(out_path, destroyed);
    write_record_sidecar(record, std::filesystem::path(out_path).string() + ".json");
    std::cout << "wrote " << out_path << " (+.json sidecar)\n";
    return kExitOk;
}

int run_fuse(const std::string& checkpoint, const std::string& a_path, const std::string& b_path,
             const std::string& out_path, const FusionRule& rule, bool resize) {
    Model model = Model::load(checkpoint);
    Image a = load_image(a_path);
    Image b = load_image(b_path);
    if (resize) {
        a = preprocess(a, model.config().patch.image_size);
        b = preprocess(b, model.config().patch.image_size);
    }
    const Image fused = fuse_images(a, b, model, rule);
    save_image(out_path, fused);
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

int run_eval(const CommonOpts& common, const std::string& dir, const std::string& out_base) {
    const RunConfig cfg = resolve_config(common);
    const FusionReport report = evaluate_dir(dir, cfg.train.loss);
    write_report_csv(report, out_base + ".csv");
    write_report_markdown(report, out_base + ".md");
    std::cout << "wrote " << out_base << ".csv and " << out_base << ".md ("
              << report.rows.size() << " pairs)\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TransFuse: self-supervised image-fusion training, destruction, fusion and evaluation"};
    app.require_subcommand(1);

    CommonOpts common;

    auto add_common = [&common](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path, "JSON run configuration");
        cmd->add_option("--seed", common.seed, "Random seed override");
        cmd->add_option("--disable", common.disable, "Disable a transform: nl, b or ns")
            ->allow_extra_args(false);
    };

    // train
    std::string data_dir, out_dir;
    std::optional<int> epochs, image_size;
    bool no_transformer = false;
    CLI::App* train_cmd = app.add_subcommand("train", "Train the encoder-decoder by destruction-reconstruction");
    add_common(train_cmd);
    train_cmd->add_option("--data", data_dir, "Directory of training images")->required();
    train_cmd->add_option("--out", out_dir, "Output directory for checkpoints and logs")->required();
    train_cmd->add_option("--epochs", epochs, "Epoch count override");
    train_cmd->add_option("--image-size", image_size, "Training resolution override");
    train_cmd->add_flag("--no-transformer", no_transformer, "CNN-only encoder ablation");

    // destroy
    std::string image_path, destroy_out, force;
    std::optional<int> destroy_size;
    CLI::App* destroy_cmd = app.add_subcommand("destroy", "Apply the destruction transforms to one image");
    add_common(destroy_cmd);
    destroy_cmd->add_option("--image", image_path, "Input image")->required();
    destroy_cmd->add_option("--out", destroy_out, "Output image path (.png/.pgm)")->required();
    destroy_cmd->add_option("--force", force, "Force a combination, e.g. nl+b+ns");
    destroy_cmd->add_option("--image-size", destroy_size, "Resize input first");

    // fuse
    std::string checkpoint, fuse_a, fuse_b, fuse_out, rule_name = "average";
    int l1_radius = 1;
    bool resize = false;
    CLI::App* fuse_cmd = app.add_subcommand("fuse", "Fuse two source images with a trained checkpoint");
    fuse_cmd->add_option("--checkpoint", checkpoint, "Trained model checkpoint")->required();
    fuse_cmd->add_option("--a", fuse_a, "First source image")->required();
    fuse_cmd->add_option("--b", fuse_b, "Second source image")->required();
    fuse_cmd->add_option("--out", fuse_out, "Fused output image")->required();
    fuse_cmd->add_option("--rule", rule_name, "Fusion rule: average or l1norm");
    fuse_cmd->add_option("--l1-radius", l1_radius, "Region-energy window radius for l1norm");
    fuse_cmd->add_flag("--resize", resize, "Resize sources to the model resolution");

    // eval
    std::string eval_dir, report_base;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate fused pairs in a directory");
    add_common(eval_cmd);
    eval_cmd->add_option("--dir", eval_dir, "Directory with <id>_a/<id>_b/<id>_fused images")->required();
    eval_cmd->add_option("--out", report_base, "Report basename (writes .csv and .md)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (app.got_subcommand(train_cmd))
            return run_train(common, data_dir, out_dir, epochs, image_size, no_transformer);
        if (app.got_subcommand(destroy_cmd))
            return run_destroy(common, image_path, destroy_out, force, destroy_size);
        if (app.got_subcommand(fuse_cmd)) {
            FusionRule rule;
            try {
                rule.kind = fusion_rule_from_name(rule_name);
            } catch (const ConfigError& e) {
                std::cerr << e.what() << "\nusage hint: --rule average | --rule l1norm\n";
                return kExitUsage;
            }
            rule.l1_block_radius = l1_radius;
            return run_fuse(checkpoint, fuse_a, fuse_b, fuse_out, rule, resize);
        }
        if (app.got_subcommand(eval_cmd)) return run_eval(common, eval_dir, report_base);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

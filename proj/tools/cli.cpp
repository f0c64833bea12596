#include "cli.hpp"

#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "mriprep/errors.hpp"
#include "mriprep/log.hpp"
#include "mriprep/phantom.hpp"
#include "mriprep/pipeline.hpp"

namespace mriprep::cli {

namespace fs = std::filesystem;
namespace pl = mriprep::pipeline;

ExitCode exit_code_for(const std::exception& error) noexcept {
    if (dynamic_cast<const ArgumentError*>(&error)) return ExitCode::usage;
    if (dynamic_cast<const NumericError*>(&error) || dynamic_cast<const DomainError*>(&error))
        return ExitCode::numeric;
    return ExitCode::data;
}

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool no_intermediates = false;
    bool quiet = false;
    bool verbose = false;
};

pl::PipelineConfig resolve_config(const Globals& g) {
    pl::PipelineConfig config = g.config_path.empty() ? pl::PipelineConfig{} : pl::load_config(g.config_path);
    if (g.seed) config.seed = *g.seed;
    if (g.out) config.output_dir = *g.out;
    if (g.no_intermediates) config.write_intermediates = false;
    return config;
}

void save_image(const Image& image, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_pgm(image, path);
}

void print_counts(std::ostream& out, const pl::DatasetManifest& m) {
    for (int k = 0; k < metrics::kNumClasses; ++k)
        out << std::left << std::setw(12) << metrics::kClassNames[k] << m.counts[k] << "\n";
    out << std::left << std::setw(12) << "total" << m.total() << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Brain MRI preprocessing and classification toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "INI configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed for every stochastic step (overrides [run] seed)");
    app.add_option("--out", g.out, "Output directory (overrides [run] output)");
    app.add_flag("--no-intermediates", g.no_intermediates, "Do not write per-stage images");
    app.add_flag("-q,--quiet", g.quiet, "Only print errors");
    app.add_flag("-v,--verbose", g.verbose, "Print debug messages");

    // ingest
    std::string root;
    std::size_t balance_target = 0;
    auto* ingest = app.add_subcommand("ingest", "Scan a class-structured dataset and write manifest.txt");
    ingest->add_option("root", root, "Dataset root with glioma/ meningioma/ no_tumor/ pituitary/")->required();
    ingest->add_option("--balance-target", balance_target, "Also print the augmentation plan for this class size");

    // preprocess / denoise / strip / augment on single images
    std::string input, output;
    bool no_crop = false, no_bias = false;
    auto* preprocess = app.add_subcommand("preprocess", "Crop to the brain and correct the bias field");
    preprocess->add_option("input", input, "Input image (PGM/PPM)")->required()->check(CLI::ExistingFile);
    preprocess->add_option("output", output, "Output PGM")->required();
    preprocess->add_flag("--no-crop", no_crop, "Skip cropping (the image is only resized)");
    preprocess->add_flag("--no-bias", no_bias, "Skip bias correction");

    std::string method;
    std::optional<double> sigma;
    auto* denoise = app.add_subcommand("denoise", "Denoise one image");
    denoise->add_option("input", input, "Input image")->required()->check(CLI::ExistingFile);
    denoise->add_option("output", output, "Output PGM")->required();
    denoise->add_option("--method", method, "bm3d, tv or gaussian (default from config)");
    denoise->add_option("--sigma", sigma, "Noise sigma for bm3d or kernel sigma for gaussian, [0,1] units");

    std::string mask_path;
    auto* strip = app.add_subcommand("strip", "Skull-strip one image");
    strip->add_option("input", input, "Input image")->required()->check(CLI::ExistingFile);
    strip->add_option("output", output, "Output PGM")->required();
    strip->add_option("--mask", mask_path, "Also write the brain mask as a PGM");

    std::size_t count = 1;
    auto* augment = app.add_subcommand("augment", "Write seeded augmentations of one image");
    augment->add_option("input", input, "Input image")->required()->check(CLI::ExistingFile);
    augment->add_option("outdir", output, "Output directory")->required();
    augment->add_option("--count", count, "Number of augmented copies")->check(CLI::PositiveNumber);

    // dataset-level commands
    std::string manifest_path, checkpoint, split = "test";
    auto* train = app.add_subcommand("train", "Train a classifier on the train/val splits of a manifest");
    train->add_option("--manifest", manifest_path, "manifest.txt from ingest or pipeline")
        ->required()
        ->check(CLI::ExistingFile);

    auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on one split of a manifest");
    evaluate->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--manifest", manifest_path, "Manifest")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--split", split, "train, val or test");

    std::vector<std::string> images;
    auto* predict = app.add_subcommand("predict", "Classify images with a checkpoint");
    predict->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    predict->add_option("images", images, "Images to classify")->required()->check(CLI::ExistingFile);

    std::string dataset;
    auto* pipeline = app.add_subcommand("pipeline", "Run every enabled stage, train and evaluate");
    pipeline->add_option("--dataset", dataset, "Dataset root (overrides [dataset] root)");

    std::size_t per_class = 5;
    int size = 96;
    auto* phantoms = app.add_subcommand("phantoms", "Write a synthetic class-structured phantom dataset");
    phantoms->add_option("root", root, "Destination directory")->required();
    phantoms->add_option("--per-class", per_class, "Images per class")->check(CLI::PositiveNumber);
    phantoms->add_option("--size", size, "Image side in pixels")->check(CLI::Range(32, 1024));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return static_cast<int>(ExitCode::ok);
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return static_cast<int>(ExitCode::ok);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\nRun with --help for usage.\n";
        return static_cast<int>(ExitCode::usage);
    }

    const log::Level previous = log::level();
    log::set_level(g.quiet ? log::Level::error : g.verbose ? log::Level::debug : log::Level::info);
    struct Restore {
        log::Level level;
        ~Restore() { log::set_level(level); }
    } restore{previous};

    try {
        pl::PipelineConfig config = resolve_config(g);
        const fs::path out_dir = config.output_dir;

        if (*ingest) {
            const pl::DatasetManifest m = pl::ingest(root, config.seed, config.split);
            fs::create_directories(out_dir);
            pl::save_manifest(m, out_dir / "manifest.txt");
            print_counts(out, m);
            if (balance_target > 0) {
                out << "augmentation plan (target " << balance_target << ")\n";
                for (const augment::ClassPlan& p : augment::balance_classes(pl::class_counts(m), balance_target))
                    out << std::left << std::setw(12) << p.name << p.synthetic << "\n";
            }
        } else if (*preprocess) {
            if (no_crop) config.stages.crop = false;
            if (no_bias) config.stages.bias = false;
            config.stages.denoise = config.stages.strip = false;
            const pl::StageOutputs r = pl::preprocess_image(load_pgm(input), config);
            for (const std::string& w : r.warnings) log::warn(w);
            save_image(r.result, output);
        } else if (*denoise) {
            if (!method.empty()) {
                if (method == "bm3d") config.denoise_method = pl::DenoiseMethod::bm3d;
                else if (method == "tv") config.denoise_method = pl::DenoiseMethod::tv;
                else if (method == "gaussian") config.denoise_method = pl::DenoiseMethod::gaussian;
                else throw ArgumentError("denoise: unknown method '" + method + "'");
            }
            if (sigma) {
                if (config.denoise_method == pl::DenoiseMethod::gaussian) {
                    config.gaussian_sigma = *sigma;
                } else {
                    config.bm3d.sigma = *sigma;
                    config.bm3d_sigma_set = true;
                }
            }
            if (config.denoise_method == pl::DenoiseMethod::bm3d && !config.bm3d_sigma_set)
                throw ArgumentError("denoise: bm3d needs --sigma or [bm3d] sigma in the config");
            config.stages.denoise = true;
            config.validate();
            save_image(pl::stage_denoise(load_pgm(input), config), output);
        } else if (*strip) {
            const skull::StripResult r = skull::strip_skull(load_pgm(input), config.strip);
            save_image(r.stripped, output);
            if (!mask_path.empty()) {
                Image mask(r.brain.width(), r.brain.height());
                for (std::size_t i = 0; i < mask.size(); ++i) mask.pixels()[i] = r.brain[i] ? 1.0 : 0.0;
                save_image(mask, mask_path);
            }
            out << "threshold " << r.report.threshold << " score " << r.report.score
                << (r.passthrough ? " passthrough" : "") << "\n";
        } else if (*augment) {
            config.augment.validate();
            augment::AugmentConfig aug = config.augment;
            aug.seed = config.seed;
            const Image image = load_pgm(input);
            const std::string stem = fs::path(input).stem().string();
            for (std::size_t i = 0; i < count; ++i) {
                char name[64];
                std::snprintf(name, sizeof name, "_aug%05zu.pgm", i);
                const Image a = augment::augment_sample(image, aug, i);
                Image clamped = a;
                for (double& v : clamped.pixels()) v = std::clamp(v, 0.0, 1.0);
                save_image(clamped, fs::path(output) / (stem + name));
            }
        } else if (*train) {
            config.train.validate();
            const pl::DatasetManifest m = pl::load_manifest(manifest_path);
            const nnet::Dataset train_set = pl::load_split(m, pl::SplitKind::train, config.image_size);
            const nnet::Dataset val_set = pl::load_split(m, pl::SplitKind::val, config.image_size);
            if (train_set.size() < 2) throw LayoutError("train: at least two training images are required");
            nnet::MiniBackboneSpec spec;
            spec.input_size = static_cast<std::size_t>(config.image_size);
            spec.widths = config.widths;
            spec.dropout_rate = config.train.dropout_rate;
            nnet::Model model = nnet::build_model(spec, config.seed);
            nnet::TrainConfig tc = config.train;
            tc.seed = config.seed;
            const nnet::TrainingCurves curves = nnet::train(model, train_set, val_set, tc);
            fs::create_directories(out_dir);
            nnet::save_checkpoint(model, out_dir / "model.ckpt");
            std::ofstream(out_dir / "curves.csv", std::ios::binary) << curves.csv();
            out << curves.csv();
        } else if (*evaluate) {
            const pl::EvaluationReport r =
                pl::evaluate_checkpoint(checkpoint, pl::load_manifest(manifest_path), pl::parse_split(split));
            fs::create_directories(out_dir);
            pl::write_evaluation(r, out_dir);
            out << metrics::render_table(r.report);
        } else if (*predict) {
            nnet::Model model = nnet::load_checkpoint(checkpoint);
            for (const std::string& path : images) {
                const nnet::Prediction p = nnet::predict(model, load_pgm(path), true);
                out << path << " " << metrics::kClassNames[p.label];
                for (double prob : p.probabilities) out << " " << std::fixed << std::setprecision(6) << prob;
                out << "\n";
            }
        } else if (*pipeline) {
            if (!dataset.empty()) config.dataset_root = dataset;
            if (config.dataset_root.empty()) throw ArgumentError("pipeline: no dataset root ([dataset] root or --dataset)");
            const pl::RunReport r = pl::run_pipeline(config);
            out << "images " << r.manifest.total() << ", augmented " << r.augmented << ", warnings "
                << r.warnings.size() << "\n";
            if (r.evaluated) out << metrics::render_table(r.evaluation.report);
        } else if (*phantoms) {
            phantom::write_phantom_tree(root, per_class, config.seed, size);
            out << "wrote " << per_class * metrics::kNumClasses << " images under " << root << "\n";
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(exit_code_for(e));
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::data);
    }
    return static_cast<int>(ExitCode::ok);
}

}  // namespace mriprep::cli

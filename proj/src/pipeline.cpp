#include "mriprep/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>

#include "json.hpp"

#include "mriprep/errors.hpp"
#include "mriprep/log.hpp"
#include "mriprep/nnet.hpp"

namespace mriprep::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const char* denoise_method_name(DenoiseMethod method) noexcept {
    switch (method) {
        case DenoiseMethod::bm3d: return "bm3d";
        case DenoiseMethod::tv: return "tv";
        case DenoiseMethod::gaussian: return "gaussian";
    }
    return "bm3d";
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Image clamp_unit(Image image, const char* stage) {
    require_finite(image, stage);
    for (double& v : image.pixels()) v = std::clamp(v, 0.0, 1.0);
    return image;
}

// Re-throws the active exception with `context` prefixed, keeping its type so
// the CLI still maps it to the right exit code.
[[noreturn]] void rethrow_with(const std::string& context) {
    try {
        throw;
    } catch (const LoadError& e) {
        throw LoadError(e.kind(), context + ": " + e.what());
    } catch (const ArgumentError& e) {
        throw ArgumentError(context + ": " + e.what());
    } catch (const RangeError& e) {
        throw RangeError(context + ": " + e.what());
    } catch (const DomainError& e) {
        throw DomainError(context + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(context + ": " + e.what());
    } catch (const IoError& e) {
        throw IoError(context + ": " + e.what());
    } catch (const EmptyRegionError& e) {
        throw EmptyRegionError(context + ": " + e.what());
    } catch (const DegenerateHistogramError& e) {
        throw DegenerateHistogramError(context + ": " + e.what());
    } catch (const CorruptCheckpointError& e) {
        throw CorruptCheckpointError(context + ": " + e.what());
    } catch (const LayoutError& e) {
        throw LayoutError(context + ": " + e.what());
    } catch (const Error& e) {
        throw Error(context + ": " + e.what());
    }
}

struct Stage {
    const char* name;
    bool enabled;
};

std::array<Stage, 4> image_stages(const PipelineConfig& c) {
    return {{{"crop", c.stages.crop}, {"bias", c.stages.bias}, {"denoise", c.stages.denoise}, {"strip", c.stages.strip}}};
}

Image run_stage(const char* name, const Image& image, const PipelineConfig& config, std::vector<std::string>& warnings) {
    const std::string_view s(name);
    if (s == "crop") return stage_crop(image, config, warnings);
    if (s == "bias") return stage_bias(image, config, warnings);
    if (s == "denoise") return stage_denoise(image, config);
    return stage_strip(image, config, warnings);
}

// Input to the first stage: the crop resizes by itself, otherwise the scan is
// brought to the working size here.
Image working_input(const Image& image, const PipelineConfig& config) {
    if (config.stages.crop) return image;
    if (image.width() == config.image_size && image.height() == config.image_size) return image;
    return resize_bilinear(image, config.image_size, config.image_size);
}

fs::path as_pgm(const std::string& relative) { return fs::path(relative).replace_extension(".pgm"); }

void ensure_parent(const fs::path& path) { fs::create_directories(path.parent_path()); }

// Saved and re-read, so later stages see exactly the stored 8-bit image.
Image store(const Image& image, const fs::path& path) {
    ensure_parent(path);
    save_pgm(image, path);
    return load_pgm(path);
}

void write_text(const fs::path& path, const std::string& text) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

json metrics_json(const metrics::ClassMetrics& m) {
    return json{{"accuracy", m.accuracy},   {"specificity", m.specificity}, {"precision", m.precision},
                {"recall", m.recall},       {"f1", m.f1},                   {"flag", metrics::flag_string(m.zero_denominator)}};
}

}  // namespace

Image stage_crop(const Image& image, const PipelineConfig& config, std::vector<std::string>& warnings) {
    crop::CropOptions options = config.crop;
    options.out_size = config.image_size;
    crop::CropResult r = crop::crop_to_brain(image, options);
    if (r.used_fallback) warnings.push_back("crop: no foreground, full frame resized");
    return clamp_unit(std::move(r.image), "crop");
}

Image stage_bias(const Image& image, const PipelineConfig& config, std::vector<std::string>& warnings) {
    const Mask mask = crop::binarize(image, config.bias_mask_threshold);
    // Too few samples for a meaningful intensity histogram.
    if (mask.count() < 64) {
        warnings.push_back("bias: foreground too small, correction skipped");
        return image;
    }
    const bias::BiasField field = bias::estimate_bias_n4(image, mask, config.n4);
    return clamp_unit(bias::correct_bias(image, field), "bias");
}

Image stage_denoise(const Image& image, const PipelineConfig& config) {
    switch (config.denoise_method) {
        case DenoiseMethod::bm3d: return clamp_unit(denoise::bm3d(image, config.bm3d), "denoise");
        case DenoiseMethod::tv: return clamp_unit(denoise::tv_denoise(image, config.tv), "denoise");
        case DenoiseMethod::gaussian:
            return clamp_unit(denoise::gaussian_filter(image, config.gaussian_sigma), "denoise");
    }
    return image;
}

Image stage_strip(const Image& image, const PipelineConfig& config, std::vector<std::string>& warnings) {
    skull::StripResult r = skull::strip_skull(image, config.strip);
    if (r.passthrough) warnings.push_back("strip: histogram not bimodal, image passed through");
    return clamp_unit(std::move(r.stripped), "strip");
}

StageOutputs preprocess_image(const Image& input, const PipelineConfig& config) {
    StageOutputs out;
    Image current = working_input(input, config);
    for (const Stage& stage : image_stages(config)) {
        if (!stage.enabled) continue;
        current = run_stage(stage.name, current, config, out.warnings);
        out.stages.emplace_back(stage.name, current);
    }
    out.result = clamp_unit(std::move(current), "preprocess");
    return out;
}

EvaluationReport evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& actual) {
    if (actual.empty()) throw ArgumentError("evaluate: no samples");
    EvaluationReport e;
    e.confusion = metrics::confusion(predicted, actual);
    e.report = metrics::report(e.confusion);
    e.samples = actual.size();
    return e;
}

nnet::Dataset load_split(const DatasetManifest& manifest, SplitKind split, int size) {
    nnet::Dataset data(static_cast<std::size_t>(size), static_cast<std::size_t>(size));
    for (const ManifestEntry* e : manifest.split(split)) {
        const fs::path path = manifest.resolve(*e);
        try {
            Image image = load_pgm(path);
            if (image.width() != size || image.height() != size) image = resize_bilinear(image, size, size);
            data.add(image, e->label);
        } catch (const Error&) {
            rethrow_with(path.string());
        }
    }
    return data;
}

EvaluationReport evaluate_checkpoint(const fs::path& checkpoint, const DatasetManifest& manifest, SplitKind split) {
    nnet::Model model = nnet::load_checkpoint(checkpoint);
    const nnet::Shape& in = model.input_shape();
    if (in.size() != 3 || in[1] != in[2]) throw ArgumentError("evaluate: model input must be square");
    const nnet::Dataset data = load_split(manifest, split, static_cast<int>(in[1]));
    if (data.empty()) throw ArgumentError(std::string("evaluate: the ") + split_name(split) + " split is empty");
    const nnet::Evaluation ev = nnet::evaluate(model, data);
    return evaluate_predictions(ev.predicted, data.labels());
}

void write_evaluation(const EvaluationReport& evaluation, const fs::path& dir) {
    write_text(dir / "confusion.csv", metrics::render_confusion_csv(evaluation.confusion));
    write_text(dir / "metrics.csv", metrics::render_csv(evaluation.report));
    write_text(dir / "report.txt", metrics::render_table(evaluation.report));
}

RunReport run_pipeline(const PipelineConfig& config) {
    config.validate();
    const fs::path out = config.output_dir;
    fs::create_directories(out);
    RunReport report;
    auto note = [&report](const std::string& w) {
        log::warn(w);
        report.warnings.push_back(w);
    };

    auto t0 = Clock::now();
    report.manifest = ingest(config.dataset_root, config.seed, config.split);
    const DatasetManifest& manifest = report.manifest;
    for (int k = 0; k < metrics::kNumClasses; ++k)
        if (manifest.counts[k] == 0) note("ingest: class " + std::string(metrics::kClassNames[k]) + " has no images");
    save_manifest(manifest, out / "manifest.txt");
    {
        // Effective settings. The output location is not an input to any
        // artifact, so it is recorded as "." to keep runs comparable.
        PipelineConfig echo = config;
        echo.output_dir = ".";
        write_text(out / "config.ini", render_config(echo));
    }
    report.timings.push_back({"ingest", seconds_since(t0)});

    std::map<std::string, double> stage_seconds;
    for (const Stage& stage : image_stages(config))
        if (stage.enabled) report.stages_run.emplace_back(stage.name);

    // Per-image stages. Images are held in manifest order.
    std::vector<Image> processed;
    processed.reserve(manifest.entries.size());
    DatasetManifest prepared = manifest;
    prepared.root = ".";
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const ManifestEntry& entry = manifest.entries[i];
        const fs::path source = manifest.resolve(entry);
        try {
            Image current = working_input(load_pgm(source), config);
            std::vector<std::string> warnings;
            for (const Stage& stage : image_stages(config)) {
                if (!stage.enabled) continue;
                const auto start = Clock::now();
                current = run_stage(stage.name, current, config, warnings);
                stage_seconds[stage.name] += seconds_since(start);
                if (config.write_intermediates) {
                    const fs::path path = out / "stages" / stage.name / as_pgm(entry.path);
                    ensure_parent(path);
                    save_pgm(current, path);
                }
            }
            for (const std::string& w : warnings) note(entry.path + ": " + w);
            const std::string rel = as_pgm(entry.path).generic_string();
            prepared.entries[i].path = rel;
            processed.push_back(store(current, out / "preprocessed" / rel));
        } catch (const Error&) {
            rethrow_with(source.string());
        }
    }
    save_manifest(prepared, out / "preprocessed" / "manifest.txt");
    for (const Stage& stage : image_stages(config))
        if (stage.enabled) report.timings.push_back({stage.name, stage_seconds[stage.name]});

    const auto size = static_cast<std::size_t>(config.image_size);
    nnet::Dataset train_set(size, size), val_set(size, size), test_set(size, size);
    std::array<std::vector<std::size_t>, metrics::kNumClasses> train_by_class;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const ManifestEntry& e = manifest.entries[i];
        switch (e.split) {
            case SplitKind::train:
                train_set.add(processed[i], e.label);
                train_by_class[e.label].push_back(i);
                break;
            case SplitKind::val: val_set.add(processed[i], e.label); break;
            case SplitKind::test: test_set.add(processed[i], e.label); break;
        }
    }

    // Augmentation draws only from the training split, so no derivative of
    // a validation or test image can reach training.
    if (config.stages.augment) {
        t0 = Clock::now();
        std::vector<augment::ClassCount> counts;
        std::size_t largest = 0;
        for (int k = 0; k < metrics::kNumClasses; ++k) largest = std::max(largest, train_by_class[k].size());
        const std::size_t target = config.augment_target ? config.augment_target : largest;
        for (int k = 0; k < metrics::kNumClasses; ++k) {
            if (train_by_class[k].empty()) {
                note("augment: class " + std::string(metrics::kClassNames[k]) + " has no training images to draw from");
                continue;
            }
            counts.push_back({std::string(metrics::kClassNames[k]), train_by_class[k].size()});
        }
        augment::AugmentConfig aug = config.augment;
        aug.seed = config.seed;
        std::uint64_t draw = 0;
        for (const augment::ClassPlan& plan : augment::balance_classes(counts, target)) {
            int k = 0;
            while (metrics::kClassNames[k] != plan.name) ++k;
            for (std::size_t j = 0; j < plan.synthetic; ++j, ++draw) {
                const std::size_t src = train_by_class[k][plan.sources[j]];
                const Image img = clamp_unit(augment::augment_sample(processed[src], aug, draw), "augment");
                fs::path rel = as_pgm(manifest.entries[src].path);
                char suffix[32];
                std::snprintf(suffix, sizeof suffix, "_aug%05zu.pgm", j);
                rel.replace_filename(rel.stem().string() + suffix);
                train_set.add(store(img, out / "augmented" / rel), k);
                ++report.augmented;
            }
        }
        report.timings.push_back({"augment", seconds_since(t0)});
    }

    if (train_set.size() < 2) throw LayoutError("train: at least two training images are required");
    t0 = Clock::now();
    nnet::MiniBackboneSpec spec;
    spec.input_size = size;
    spec.widths = config.widths;
    spec.dropout_rate = config.train.dropout_rate;
    nnet::Model model = nnet::build_model(spec, config.seed);
    nnet::TrainConfig train_config = config.train;
    train_config.seed = config.seed;
    if (val_set.empty()) note("train: validation split is empty, scheduling on training loss");
    report.curves = nnet::train(model, train_set, val_set, train_config);
    write_text(out / "curves.csv", report.curves.csv());
    nnet::save_checkpoint(model, out / "model.ckpt");
    report.timings.push_back({"train", seconds_since(t0)});

    t0 = Clock::now();
    if (test_set.empty()) {
        note("evaluate: test split is empty, no metrics produced");
    } else {
        const nnet::Evaluation ev = nnet::evaluate(model, test_set);
        report.evaluation = evaluate_predictions(ev.predicted, test_set.labels());
        report.evaluated = true;
        write_evaluation(report.evaluation, out);
    }
    report.timings.push_back({"evaluate", seconds_since(t0)});

    write_text(out / "run_report.json", render_run_report(report, config));
    write_text(out / "timings.json", render_timings(report));
    return report;
}

std::string render_run_report(const RunReport& report, const PipelineConfig& config) {
    const DatasetManifest& m = report.manifest;
    json counts = json::object(), splits = json::object();
    for (int k = 0; k < metrics::kNumClasses; ++k) counts[std::string(metrics::kClassNames[k])] = m.counts[k];
    for (SplitKind s : {SplitKind::train, SplitKind::val, SplitKind::test}) splits[split_name(s)] = m.split(s).size();

    json stages = json::array();
    for (const auto& [name, enabled] : image_stages(config)) {
        json st{{"name", name}, {"enabled", enabled}};
        if (enabled) {
            st["images"] = m.entries.size();
            std::size_t warned = 0;
            const std::string tag = std::string(": ") + name + ":";
            for (const std::string& w : report.warnings) warned += w.find(tag) != std::string::npos;
            st["warnings"] = warned;
        }
        if (std::string_view(name) == "denoise" && enabled) st["method"] = denoise_method_name(config.denoise_method);
        stages.push_back(st);
    }
    stages.push_back({{"name", "augment"}, {"enabled", config.stages.augment}, {"synthetic", report.augmented}});

    json epochs = json::array();
    for (const nnet::EpochRecord& e : report.curves.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_acc", e.train_acc},
                          {"val_loss", e.val_loss},
                          {"val_acc", e.val_acc},
                          {"lr", e.lr}});

    json evaluation = nullptr;
    if (report.evaluated) {
        const EvaluationReport& ev = report.evaluation;
        json classes = json::object(), confusion = json::array();
        for (int k = 0; k < metrics::kNumClasses; ++k) {
            classes[std::string(metrics::kClassNames[k])] = metrics_json(ev.report.classes[k]);
            json row = json::array();
            for (int p = 0; p < metrics::kNumClasses; ++p) row.push_back(ev.confusion.counts[k][p]);
            confusion.push_back(row);
        }
        evaluation = {{"split", "test"},
                      {"samples", ev.samples},
                      {"overall_accuracy", ev.report.overall_accuracy},
                      {"classes", classes},
                      {"macro", metrics_json(ev.report.macro)},
                      {"confusion", confusion}};
    }

    json doc{{"tool", "mriprep"},
             {"report_version", 1},
             {"seed", config.seed},
             {"dataset", {{"root", m.root.generic_string()}, {"total", m.total()}, {"counts", counts}, {"splits", splits}}},
             {"stages", stages},
             {"training", {{"train_samples", m.split(SplitKind::train).size() + report.augmented}, {"epochs", epochs}}},
             {"evaluation", evaluation},
             {"warnings", report.warnings}};
    return doc.dump(2) + "\n";
}

std::string render_timings(const RunReport& report) {
    json doc = json::object();
    double total = 0.0;
    for (const StageTiming& t : report.timings) {
        doc[t.stage] = t.seconds;
        total += t.seconds;
    }
    doc["total"] = total;
    return doc.dump(2) + "\n";
}

}  // namespace mriprep::pipeline

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mriprep/augment.hpp"
#include "mriprep/biasfield.hpp"
#include "mriprep/crop.hpp"
#include "mriprep/denoise.hpp"
#include "mriprep/metrics.hpp"
#include "mriprep/skullstrip.hpp"
#include "mriprep/train.hpp"

namespace mriprep::pipeline {

enum class SplitKind { train, val, test };

const char* split_name(SplitKind split) noexcept;
// Throws ArgumentError for anything but "train", "val" or "test".
SplitKind parse_split(const std::string& name);

struct SplitFractions {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;

    // Non-negative and summing to 1 within 1e-9.
    void validate() const;
};

struct ManifestEntry {
    std::string path;  // relative to the manifest root, '/'-separated
    int label = 0;
    SplitKind split = SplitKind::train;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    // Relative roots are resolved against the directory of the manifest file.
    std::filesystem::path root;
    std::uint64_t seed = 0;
    std::array<std::size_t, metrics::kNumClasses> counts{};
    // Class-major, each class lexicographically sorted by path.
    std::vector<ManifestEntry> entries;

    std::size_t total() const noexcept;
    std::vector<const ManifestEntry*> split(SplitKind kind) const;
    std::filesystem::path resolve(const ManifestEntry& entry) const;

    std::string to_text() const;
    // Throws LayoutError when the text is not a manifest.
    static DatasetManifest parse(const std::string& text);

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
// A relative root in the file is resolved against the file's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

// File extensions ingest treats as images (lower-case, with the dot).
bool is_image_file(const std::filesystem::path& path);

// Recursive scan of root/<class>/ for every class name. Missing class
// directory: LayoutError. Empty class: warning. Each class is shuffled with
// its own seeded stream and cut into test, val and train by rounding the
// fractions.
DatasetManifest ingest(const std::filesystem::path& root, std::uint64_t seed, const SplitFractions& fractions = {});

// Per-class counts in class-name order, ready for augment::balance_classes.
std::vector<augment::ClassCount> class_counts(const DatasetManifest& manifest);

enum class DenoiseMethod { bm3d, tv, gaussian };

const char* denoise_method_name(DenoiseMethod method) noexcept;

struct StageToggles {
    bool crop = true;
    bool bias = true;
    bool denoise = true;
    bool strip = true;
    bool augment = true;
};

struct PipelineConfig {
    std::filesystem::path dataset_root;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;
    StageToggles stages;
    bool write_intermediates = true;
    SplitFractions split;
    int image_size = 150;

    crop::CropOptions crop;
    // Pixels above this intensity form the bias-estimation mask.
    double bias_mask_threshold = crop::kDefaultThreshold;
    bias::N4Params n4;
    DenoiseMethod denoise_method = DenoiseMethod::bm3d;
    denoise::Bm3dProfile bm3d;
    bool bm3d_sigma_set = false;
    denoise::TvParams tv;
    double gaussian_sigma = 1.0;
    skull::StripOptions strip;
    augment::AugmentConfig augment;
    // Train-split size every class is brought up to; 0 means the largest class.
    std::size_t augment_target = 0;
    nnet::TrainConfig train;
    std::vector<std::size_t> widths{16, 32, 64};

    // Throws ArgumentError, naming the offending key where there is one.
    void validate() const;
};

// Sectioned key-value text: [run] [dataset] [split] [stages] [crop] [bias]
// [denoise] [bm3d] [tv] [strip] [augment] [train] [model]. Unknown sections
// or keys and malformed values are an ArgumentError; missing keys keep their
// defaults. Cross-field rules (a BM3D sigma when BM3D is the selected
// denoiser) are left to validate(), so command-line overrides can fill them.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
// Canonical text of every setting. Parsing it back yields a config that
// renders to the same text.
std::string render_config(const PipelineConfig& config);

// Per-image preprocessing in the fixed stage order. Every stage output is
// clamped to [0, 1].
struct StageOutputs {
    std::vector<std::pair<std::string, Image>> stages;  // (stage name, output) for enabled stages
    std::vector<std::string> warnings;
    Image result;
};

StageOutputs preprocess_image(const Image& input, const PipelineConfig& config);

// Each stage on its own, as used by preprocess_image.
Image stage_crop(const Image& image, const PipelineConfig& config, std::vector<std::string>& warnings);
Image stage_bias(const Image& image, const PipelineConfig& config, std::vector<std::string>& warnings);
Image stage_denoise(const Image& image, const PipelineConfig& config);
Image stage_strip(const Image& image, const PipelineConfig& config, std::vector<std::string>& warnings);

struct EvaluationReport {
    metrics::ConfusionMatrix confusion;
    metrics::ClassReport report;
    std::size_t samples = 0;
};

EvaluationReport evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& actual);

// Loads every image of `split`, resized to the model input when needed, and
// scores the model on it. Empty split: ArgumentError.
EvaluationReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const DatasetManifest& manifest,
                                     SplitKind split);

// confusion.csv, metrics.csv and report.txt under dir.
void write_evaluation(const EvaluationReport& evaluation, const std::filesystem::path& dir);

// Images of one split as a dataset at size x size (bilinear resize when the
// stored size differs).
nnet::Dataset load_split(const DatasetManifest& manifest, SplitKind split, int size);

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunReport {
    DatasetManifest manifest;
    std::vector<std::string> warnings;
    std::vector<std::string> stages_run;
    std::size_t augmented = 0;
    nnet::TrainingCurves curves;
    bool evaluated = false;
    EvaluationReport evaluation;
    std::vector<StageTiming> timings;
};

// ingest -> per-image stages -> augment (train split only) -> train ->
// evaluate on the test split. Writes under config.output_dir:
//   manifest.txt, config.ini, stages/<stage>/<class>/*.pgm (unless
//   intermediates are off), preprocessed/<class>/*.pgm plus its manifest,
//   augmented/<class>/*.pgm, model.ckpt, curves.csv, confusion.csv,
//   metrics.csv, report.txt, run_report.json and timings.json.
// Everything except timings.json is a pure function of the dataset bytes and
// the config. A failing image aborts the run with its path in the message.
RunReport run_pipeline(const PipelineConfig& config);

// Deterministic JSON text of the run (timings excluded).
std::string render_run_report(const RunReport& report, const PipelineConfig& config);
std::string render_timings(const RunReport& report);

}  // namespace mriprep::pipeline

#include <fstream>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "mriprep/errors.hpp"
#include "mriprep/log.hpp"
#include "mriprep/pipeline.hpp"

using namespace mriprep;
using namespace mriprep::pipeline;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void touch(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream(path) << "";
}

void make_tree(const fs::path& root, const std::array<int, 4>& counts) {
    for (int k = 0; k < 4; ++k) {
        fs::create_directories(root / std::string(metrics::kClassNames[k]));
        for (int i = 0; i < counts[k]; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "img_%03d.jpg", i);
            touch(root / std::string(metrics::kClassNames[k]) / name);
        }
    }
}

// Small, fast settings for end-to-end runs.
PipelineConfig quick_config(const fs::path& data, const fs::path& out) {
    PipelineConfig c;
    c.dataset_root = data;
    c.output_dir = out;
    c.seed = 3;
    c.image_size = 48;
    c.denoise_method = DenoiseMethod::gaussian;
    c.widths = {4, 8};
    c.train.epochs = 2;
    c.train.batch_size = 8;
    c.n4.max_iterations = 5;
    return c;
}

struct QuietLogs {
    log::Level saved = log::level();
    QuietLogs() { log::set_level(log::Level::off); }
    ~QuietLogs() { log::set_level(saved); }
};

}  // namespace

TEST_CASE("split names and fractions") {
    for (SplitKind s : {SplitKind::train, SplitKind::val, SplitKind::test}) CHECK(parse_split(split_name(s)) == s);
    CHECK_THROWS_AS(parse_split("validation"), ArgumentError);
    SplitFractions f;
    CHECK_NOTHROW(f.validate());
    f.test = 0.3;
    CHECK_THROWS_AS(f.validate(), ArgumentError);
    f = {1.2, -0.2, 0.0};
    CHECK_THROWS_AS(f.validate(), ArgumentError);
}

TEST_CASE("image file recognition") {
    for (const char* name : {"a.pgm", "a.PPM", "b.jpg", "c.JPEG", "d.png", "e.pnm"}) CHECK(is_image_file(name));
    for (const char* name : {"a.txt", "jpg", "a.jpg.bak", "README"}) CHECK_FALSE(is_image_file(name));
}

TEST_CASE("ingest splits every class by rounded fractions") {
    testing::TempDir dir("ingest");
    make_tree(dir.path(), {10, 7, 3, 1});
    touch(dir / "glioma/notes.txt");
    touch(dir / "glioma/.hidden.jpg");
    touch(dir / "meningioma/nested/deep.png");
    QuietLogs quiet;
    const DatasetManifest m = ingest(dir.path(), 17);
    CHECK(m.counts == std::array<std::size_t, 4>{10, 8, 3, 1});
    CHECK(m.total() == 22);
    for (int k = 0; k < 4; ++k) {
        const double n = static_cast<double>(m.counts[k]);
        std::size_t test = 0, val = 0;
        std::vector<std::string> paths;
        for (const ManifestEntry& e : m.entries) {
            if (e.label != k) continue;
            test += e.split == SplitKind::test;
            val += e.split == SplitKind::val;
            paths.push_back(e.path);
        }
        CHECK(test == static_cast<std::size_t>(std::llround(0.2 * n)));
        CHECK(val == std::min(static_cast<std::size_t>(std::llround(0.1 * n)), m.counts[k] - test));
        CHECK(std::is_sorted(paths.begin(), paths.end()));
    }
    bool nested = false;
    for (const ManifestEntry& e : m.entries) nested = nested || e.path == "meningioma/nested/deep.png";
    CHECK(nested);
    CHECK(ingest(dir.path(), 17) == m);
    const DatasetManifest other = ingest(dir.path(), 18);
    CHECK(other.counts == m.counts);
    CHECK_FALSE(other.entries == m.entries);
}

TEST_CASE("ingest rejects a broken layout") {
    testing::TempDir dir("ingest_bad");
    CHECK_THROWS_AS(ingest(dir / "absent", 1), LayoutError);
    make_tree(dir.path(), {2, 2, 2, 2});
    fs::remove_all(dir / "pituitary");
    CHECK_THROWS_AS(ingest(dir.path(), 1), LayoutError);
    CHECK_THROWS_AS(ingest(dir.path(), 1, {0.5, 0.5, 0.5}), ArgumentError);
}

TEST_CASE("manifest text round trip and validation") {
    testing::TempDir dir("manifest");
    make_tree(dir / "data", {3, 4, 5, 6});
    const DatasetManifest m = ingest(dir / "data", 4);
    CHECK(DatasetManifest::parse(m.to_text()) == m);
    CHECK(class_counts(m).size() == 4);
    CHECK(class_counts(m)[3].name == "pituitary");
    CHECK(class_counts(m)[3].count == 6);

    DatasetManifest relative = m;
    relative.root = "data";
    save_manifest(relative, dir / "manifest.txt");
    const DatasetManifest loaded = load_manifest(dir / "manifest.txt");
    CHECK(loaded.entries == m.entries);
    CHECK(fs::exists(loaded.resolve(loaded.entries.front())));

    CHECK_THROWS_AS(DatasetManifest::parse("hello\n"), LayoutError);
    std::string bad_count = m.to_text();
    bad_count.replace(bad_count.find("count glioma 3"), 14, "count glioma 9");
    CHECK_THROWS_AS(DatasetManifest::parse(bad_count), LayoutError);
    CHECK_THROWS_AS(DatasetManifest::parse(m.to_text() + "train nosuchclass x.jpg\n"), LayoutError);
}

TEST_CASE("config parsing") {
    const PipelineConfig c = parse_config(R"(# comment line
[run]
seed = 9
image_size = 64
write_intermediates = no

[stages]
bias = off

[denoise]
method = tv

[tv]
weight = 0.2

[model]
widths = 8,16
)");
    CHECK(c.seed == 9);
    CHECK(c.image_size == 64);
    CHECK_FALSE(c.write_intermediates);
    CHECK_FALSE(c.stages.bias);
    CHECK(c.stages.crop);
    CHECK(c.denoise_method == DenoiseMethod::tv);
    CHECK(c.tv.weight == 0.2);
    CHECK(c.widths == std::vector<std::size_t>{8, 16});
    CHECK(c.train.learning_rate == 3e-4);

    CHECK_THROWS_AS(parse_config("[run]\ncolour = red\n"), ArgumentError);
    CHECK_THROWS_AS(parse_config("[nonsense]\nx = 1\n"), ArgumentError);
    CHECK_THROWS_AS(parse_config("seed = 1\n[denoise]\nmethod = tv\n"), ArgumentError);
    CHECK_THROWS_AS(parse_config("[run]\nwrite_intermediates = maybe\n[denoise]\nmethod = tv\n"), ArgumentError);
    CHECK_THROWS_AS(parse_config("[run]\nseed = -4\n[denoise]\nmethod = tv\n"), ArgumentError);
    // BM3D is the default denoiser and needs an explicit noise level.
    CHECK_THROWS_AS(parse_config("[run]\nseed = 1\n").validate(), ArgumentError);
    CHECK_NOTHROW(parse_config("[bm3d]\nsigma = 0.05\n").validate());
    CHECK_NOTHROW(parse_config("[stages]\ndenoise = false\n").validate());
    CHECK_THROWS_AS(parse_config("[bm3d]\nsigma = 0\n").validate(), ArgumentError);
}

TEST_CASE("config rendering is canonical") {
    PipelineConfig c;
    c.seed = 12;
    c.bm3d.sigma = 0.07;
    c.bm3d_sigma_set = true;
    c.augment.fill = Border::reflect;
    c.train.learning_rate = 1.0 / 3.0;
    c.crop.blur_sigma = 0.1;
    c.widths = {5, 7, 9};
    const std::string text = render_config(c);
    const PipelineConfig back = parse_config(text);
    CHECK(render_config(back) == text);
    CHECK(back.train.learning_rate == c.train.learning_rate);
    CHECK(back.crop.blur_sigma == c.crop.blur_sigma);
    CHECK(back.augment.fill == Border::reflect);

    testing::TempDir dir("config");
    std::ofstream(dir / "c.ini") << text;
    CHECK(render_config(load_config(dir / "c.ini")) == text);
    CHECK_THROWS_AS(load_config(dir / "missing.ini"), Error);
}

TEST_CASE("preprocess runs the enabled stages in order") {
    const Image scan = resize_bilinear(phantom::head_phantom(1).image, 80, 70);
    PipelineConfig c;
    c.image_size = 48;
    c.denoise_method = DenoiseMethod::gaussian;
    const StageOutputs all = preprocess_image(scan, c);
    REQUIRE(all.stages.size() == 4);
    CHECK(all.stages[0].first == "crop");
    CHECK(all.stages[1].first == "bias");
    CHECK(all.stages[2].first == "denoise");
    CHECK(all.stages[3].first == "strip");
    CHECK(all.result == all.stages.back().second);
    CHECK(all.result.width() == 48);
    for (const auto& [name, img] : all.stages)
        for (double v : img.pixels()) CHECK((v >= 0.0 && v <= 1.0));

    c.stages = {false, false, true, false, true};
    const StageOutputs some = preprocess_image(scan, c);
    REQUIRE(some.stages.size() == 1);
    CHECK(some.result.width() == 48);
    CHECK(some.result == denoise::gaussian_filter(resize_bilinear(scan, 48, 48), 1.0));
}

TEST_CASE("bias stage skips a nearly empty scan") {
    Image dark(40, 40, 0.0);
    dark.at(3, 3) = 1.0;
    PipelineConfig c;
    std::vector<std::string> warnings;
    CHECK(stage_bias(dark, c, warnings) == dark);
    CHECK(warnings.size() == 1);
}

TEST_CASE("evaluate_predictions") {
    const EvaluationReport e = evaluate_predictions({0, 1, 2, 3}, {0, 1, 2, 2});
    CHECK(e.samples == 4);
    CHECK(e.report.overall_accuracy == 0.75);
    CHECK_THROWS_AS(evaluate_predictions({}, {}), ArgumentError);
}

TEST_CASE("end-to-end run writes a complete, reproducible artifact set") {
    testing::TempDir dir("run");
    phantom::write_phantom_tree(dir / "data", 6, 5, 64);
    // An unbalanced training split, so augmentation has work to do.
    fs::remove(dir / "data/glioma/glioma_000.pgm");
    fs::remove(dir / "data/glioma/glioma_001.pgm");
    QuietLogs quiet;
    const PipelineConfig c = quick_config(dir / "data", dir / "a");
    const RunReport r = run_pipeline(c);
    for (const char* f : {"manifest.txt", "config.ini", "curves.csv", "model.ckpt", "confusion.csv", "metrics.csv",
                          "report.txt", "run_report.json", "timings.json", "preprocessed/manifest.txt"})
        CHECK_MESSAGE(fs::exists(dir / "a" / f), f);
    CHECK(r.stages_run == std::vector<std::string>{"crop", "bias", "denoise", "strip"});
    CHECK(r.evaluated);
    CHECK(r.curves.epochs.size() == 2);
    CHECK(fs::exists(dir / "a/stages/strip/glioma"));

    // Augmented images derive from training images only.
    const DatasetManifest& m = r.manifest;
    std::set<std::string> train_stems;
    for (const ManifestEntry* e : m.split(SplitKind::train)) train_stems.insert(fs::path(e->path).stem().string());
    std::size_t augmented = 0;
    for (const auto& item : fs::recursive_directory_iterator(dir / "a/augmented")) {
        if (!item.is_regular_file()) continue;
        ++augmented;
        const std::string stem = item.path().stem().string();
        CHECK(train_stems.count(stem.substr(0, stem.rfind("_aug"))) == 1);
    }
    CHECK(augmented == r.augmented);
    CHECK(augmented > 0);

    const auto doc = nlohmann::json::parse(read_file(dir / "a/run_report.json"));
    CHECK(doc["dataset"]["total"] == 22);
    CHECK(doc["stages"].size() == 5);
    CHECK(doc["evaluation"]["samples"] == m.split(SplitKind::test).size());

    // The saved checkpoint reproduces the run's evaluation from the
    // preprocessed manifest.
    const DatasetManifest prepared = load_manifest(dir / "a/preprocessed/manifest.txt");
    const EvaluationReport again = evaluate_checkpoint(dir / "a/model.ckpt", prepared, SplitKind::test);
    CHECK(again.confusion == r.evaluation.confusion);

    PipelineConfig second = c;
    second.output_dir = dir / "b";
    run_pipeline(second);
    for (const char* f : {"run_report.json", "curves.csv", "model.ckpt", "config.ini", "metrics.csv"})
        CHECK_MESSAGE(read_file(dir / "a" / f) == read_file(dir / "b" / f), f);
}

TEST_CASE("a run without intermediates or training data") {
    testing::TempDir dir("run_small");
    phantom::write_phantom_tree(dir / "data", 1, 6, 48);
    QuietLogs quiet;
    PipelineConfig c = quick_config(dir / "data", dir / "out");
    c.write_intermediates = false;
    c.stages.augment = false;
    // One image per class rounds to train only, so training has four
    // images and nothing is left to evaluate.
    const RunReport r = run_pipeline(c);
    CHECK_FALSE(fs::exists(dir / "out/stages"));
    CHECK_FALSE(r.evaluated);
    CHECK_FALSE(r.warnings.empty());

    fs::remove_all(dir / "data/glioma");
    fs::create_directories(dir / "data/glioma");
    for (const char* cls : {"meningioma", "no_tumor", "pituitary"}) {
        fs::remove_all(dir / "data" / cls);
        fs::create_directories(dir / "data" / cls);
    }
    CHECK_THROWS_AS(run_pipeline(c), LayoutError);
}

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mriprep/errors.hpp"
#include "mriprep/pipeline.hpp"

namespace mriprep::pipeline {

namespace {

namespace pt = boost::property_tree;

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ArgumentError("config: " + key + " = '" + value + "' is not " + expected);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) bad_value(key, v, "a number");
    return out;
}

template <typename T>
T to_integer(const std::string& key, const std::string& v) {
    T out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "off" || v == "no" || v == "0") return false;
    bad_value(key, v, "a boolean");
}

using Setter = std::function<void(PipelineConfig&, const std::string& key, const std::string& value)>;

// "section.key" -> setter.
const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto dbl = [](double PipelineConfig::*m) {
            return [m](PipelineConfig& c, const std::string& k, const std::string& v) { c.*m = to_double(k, v); };
        };
        t["run.seed"] = [](auto& c, auto& k, auto& v) { c.seed = to_integer<std::uint64_t>(k, v); };
        t["run.output"] = [](auto& c, auto&, auto& v) { c.output_dir = v; };
        t["run.write_intermediates"] = [](auto& c, auto& k, auto& v) { c.write_intermediates = to_bool(k, v); };
        t["run.image_size"] = [](auto& c, auto& k, auto& v) { c.image_size = to_integer<int>(k, v); };
        t["dataset.root"] = [](auto& c, auto&, auto& v) { c.dataset_root = v; };
        t["split.train"] = [](auto& c, auto& k, auto& v) { c.split.train = to_double(k, v); };
        t["split.val"] = [](auto& c, auto& k, auto& v) { c.split.val = to_double(k, v); };
        t["split.test"] = [](auto& c, auto& k, auto& v) { c.split.test = to_double(k, v); };
        t["stages.crop"] = [](auto& c, auto& k, auto& v) { c.stages.crop = to_bool(k, v); };
        t["stages.bias"] = [](auto& c, auto& k, auto& v) { c.stages.bias = to_bool(k, v); };
        t["stages.denoise"] = [](auto& c, auto& k, auto& v) { c.stages.denoise = to_bool(k, v); };
        t["stages.strip"] = [](auto& c, auto& k, auto& v) { c.stages.strip = to_bool(k, v); };
        t["stages.augment"] = [](auto& c, auto& k, auto& v) { c.stages.augment = to_bool(k, v); };
        t["crop.threshold"] = [](auto& c, auto& k, auto& v) { c.crop.threshold = to_double(k, v); };
        t["crop.margin"] = [](auto& c, auto& k, auto& v) { c.crop.margin = to_integer<int>(k, v); };
        t["crop.connectivity"] = [](auto& c, auto& k, auto& v) { c.crop.connectivity = to_integer<int>(k, v); };
        t["crop.blur_sigma"] = [](auto& c, auto& k, auto& v) { c.crop.blur_sigma = to_double(k, v); };
        t["bias.mask_threshold"] = dbl(&PipelineConfig::bias_mask_threshold);
        t["bias.max_iterations"] = [](auto& c, auto& k, auto& v) { c.n4.max_iterations = to_integer<int>(k, v); };
        t["bias.convergence_threshold"] = [](auto& c, auto& k, auto& v) {
            c.n4.convergence_threshold = to_double(k, v);
        };
        t["bias.histogram_bins"] = [](auto& c, auto& k, auto& v) { c.n4.histogram_bins = to_integer<int>(k, v); };
        t["bias.fwhm"] = [](auto& c, auto& k, auto& v) { c.n4.fwhm = to_double(k, v); };
        t["bias.wiener_noise"] = [](auto& c, auto& k, auto& v) { c.n4.wiener_noise = to_double(k, v); };
        t["bias.field_smoothing_sigma"] = [](auto& c, auto& k, auto& v) {
            c.n4.field_smoothing_sigma = to_double(k, v);
        };
        t["denoise.method"] = [](auto& c, auto& k, auto& v) {
            if (v == "bm3d") c.denoise_method = DenoiseMethod::bm3d;
            else if (v == "tv") c.denoise_method = DenoiseMethod::tv;
            else if (v == "gaussian") c.denoise_method = DenoiseMethod::gaussian;
            else bad_value(k, v, "one of bm3d, tv, gaussian");
        };
        t["denoise.gaussian_sigma"] = dbl(&PipelineConfig::gaussian_sigma);
        t["bm3d.sigma"] = [](auto& c, auto& k, auto& v) {
            c.bm3d.sigma = to_double(k, v);
            c.bm3d_sigma_set = true;
        };
        t["bm3d.block_size"] = [](auto& c, auto& k, auto& v) { c.bm3d.block_size = to_integer<int>(k, v); };
        t["bm3d.search_window"] = [](auto& c, auto& k, auto& v) { c.bm3d.search_window = to_integer<int>(k, v); };
        t["bm3d.max_group_size"] = [](auto& c, auto& k, auto& v) { c.bm3d.max_group_size = to_integer<int>(k, v); };
        t["bm3d.step"] = [](auto& c, auto& k, auto& v) { c.bm3d.step = to_integer<int>(k, v); };
        t["bm3d.match_threshold_stage1"] = [](auto& c, auto& k, auto& v) {
            c.bm3d.match_threshold_stage1 = to_double(k, v);
        };
        t["bm3d.match_threshold_stage2"] = [](auto& c, auto& k, auto& v) {
            c.bm3d.match_threshold_stage2 = to_double(k, v);
        };
        t["bm3d.hard_threshold_multiplier"] = [](auto& c, auto& k, auto& v) {
            c.bm3d.hard_threshold_multiplier = to_double(k, v);
        };
        t["tv.weight"] = [](auto& c, auto& k, auto& v) { c.tv.weight = to_double(k, v); };
        t["tv.max_iters"] = [](auto& c, auto& k, auto& v) { c.tv.max_iters = to_integer<int>(k, v); };
        t["tv.tol"] = [](auto& c, auto& k, auto& v) { c.tv.tol = to_double(k, v); };
        t["strip.cutoff"] = [](auto& c, auto& k, auto& v) { c.strip.cutoff = to_double(k, v); };
        t["strip.closing_radius"] = [](auto& c, auto& k, auto& v) {
            c.strip.closing_radius = to_integer<int>(k, v);
        };
        t["augment.rotation_range"] = [](auto& c, auto& k, auto& v) { c.augment.rotation_range = to_double(k, v); };
        t["augment.width_shift"] = [](auto& c, auto& k, auto& v) { c.augment.width_shift = to_double(k, v); };
        t["augment.height_shift"] = [](auto& c, auto& k, auto& v) { c.augment.height_shift = to_double(k, v); };
        t["augment.hflip"] = [](auto& c, auto& k, auto& v) { c.augment.hflip = to_bool(k, v); };
        t["augment.vflip"] = [](auto& c, auto& k, auto& v) { c.augment.vflip = to_bool(k, v); };
        t["augment.fill"] = [](auto& c, auto& k, auto& v) {
            if (v == "zero") c.augment.fill = Border::zero;
            else if (v == "reflect") c.augment.fill = Border::reflect;
            else bad_value(k, v, "zero or reflect");
        };
        t["augment.target"] = [](auto& c, auto& k, auto& v) { c.augment_target = to_integer<std::size_t>(k, v); };
        t["train.learning_rate"] = [](auto& c, auto& k, auto& v) { c.train.learning_rate = to_double(k, v); };
        t["train.batch_size"] = [](auto& c, auto& k, auto& v) { c.train.batch_size = to_integer<std::size_t>(k, v); };
        t["train.epochs"] = [](auto& c, auto& k, auto& v) { c.train.epochs = to_integer<int>(k, v); };
        t["train.dropout_rate"] = [](auto& c, auto& k, auto& v) { c.train.dropout_rate = to_double(k, v); };
        t["train.plateau_patience"] = [](auto& c, auto& k, auto& v) {
            c.train.plateau_patience = to_integer<int>(k, v);
        };
        t["train.plateau_factor"] = [](auto& c, auto& k, auto& v) { c.train.plateau_factor = to_double(k, v); };
        t["train.min_lr"] = [](auto& c, auto& k, auto& v) { c.train.min_lr = to_double(k, v); };
        t["model.widths"] = [](auto& c, auto& k, auto& v) {
            c.widths.clear();
            std::size_t start = 0;
            while (start <= v.size()) {
                const std::size_t comma = std::min(v.find(',', start), v.size());
                c.widths.push_back(to_integer<std::size_t>(k, v.substr(start, comma - start)));
                start = comma + 1;
            }
        };
        return t;
    }();
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void PipelineConfig::validate() const {
    split.validate();
    if (image_size < 8) throw ArgumentError("config: run.image_size must be >= 8");
    if (!(crop.threshold >= 0.0 && crop.threshold < 1.0)) throw ArgumentError("config: crop.threshold must be in [0, 1)");
    if (crop.connectivity != 4 && crop.connectivity != 8) throw ArgumentError("config: crop.connectivity must be 4 or 8");
    if (!(crop.blur_sigma >= 0.0)) throw ArgumentError("config: crop.blur_sigma must be >= 0");
    if (!(bias_mask_threshold >= 0.0 && bias_mask_threshold < 1.0))
        throw ArgumentError("config: bias.mask_threshold must be in [0, 1)");
    n4.validate();
    if (stages.denoise) {
        switch (denoise_method) {
            case DenoiseMethod::bm3d:
                if (!bm3d_sigma_set) throw ArgumentError("config: bm3d.sigma is required when denoise.method = bm3d");
                if (!(bm3d.sigma > 0.0)) throw ArgumentError("config: bm3d.sigma must be > 0");
                bm3d.validate();
                break;
            case DenoiseMethod::tv: tv.validate(); break;
            case DenoiseMethod::gaussian:
                if (!(gaussian_sigma >= 0.0)) throw ArgumentError("config: denoise.gaussian_sigma must be >= 0");
                break;
        }
    }
    if (!(strip.cutoff >= 0.0 && strip.cutoff <= 1.0)) throw ArgumentError("config: strip.cutoff must be in [0, 1]");
    if (strip.closing_radius < 0) throw ArgumentError("config: strip.closing_radius must be >= 0");
    augment.validate();
    train.validate();
    if (widths.empty() || std::find(widths.begin(), widths.end(), 0u) != widths.end())
        throw ArgumentError("config: model.widths must be a non-empty list of positive integers");
    std::size_t size = static_cast<std::size_t>(image_size);
    for (std::size_t i = 0; i < widths.size(); ++i) size /= 2;
    if (size == 0) throw ArgumentError("config: run.image_size is too small for the number of conv blocks");
}

PipelineConfig parse_config(const std::string& text) {
    // Boost's INI reader only knows ';' comments; '#' lines are dropped here.
    std::string cleaned;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        const std::string t = trim(line);
        if (!t.starts_with("#")) cleaned += line + "\n";
    }
    pt::ptree tree;
    try {
        std::istringstream in(cleaned);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ArgumentError(std::string("config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    PipelineConfig config;
    const auto& table = setters();
    for (const auto& [section, body] : tree) {
        if (!body.data().empty()) throw ArgumentError("config: key '" + section + "' outside any section");
        const auto known = table.lower_bound(section + ".");
        if (known == table.end() || !known->first.starts_with(section + "."))
            throw ArgumentError("config: unknown section [" + section + "]");
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            const auto it = table.find(full);
            if (it == table.end()) throw ArgumentError("config: unknown key '" + full + "'");
            it->second(config, full, trim(value.data()));
        }
    }
    return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::string render_config(const PipelineConfig& c) {
    std::ostringstream o;
    o << "[run]\nseed = " << c.seed << "\noutput = " << c.output_dir.generic_string()
      << "\nwrite_intermediates = " << format_bool(c.write_intermediates) << "\nimage_size = " << c.image_size
      << "\n\n[dataset]\nroot = " << c.dataset_root.generic_string() << "\n\n[split]\ntrain = "
      << format_double(c.split.train) << "\nval = " << format_double(c.split.val)
      << "\ntest = " << format_double(c.split.test) << "\n\n[stages]\ncrop = " << format_bool(c.stages.crop)
      << "\nbias = " << format_bool(c.stages.bias) << "\ndenoise = " << format_bool(c.stages.denoise)
      << "\nstrip = " << format_bool(c.stages.strip) << "\naugment = " << format_bool(c.stages.augment)
      << "\n\n[crop]\nthreshold = " << format_double(c.crop.threshold) << "\nmargin = " << c.crop.margin
      << "\nconnectivity = " << c.crop.connectivity << "\nblur_sigma = " << format_double(c.crop.blur_sigma)
      << "\n\n[bias]\nmask_threshold = " << format_double(c.bias_mask_threshold)
      << "\nmax_iterations = " << c.n4.max_iterations
      << "\nconvergence_threshold = " << format_double(c.n4.convergence_threshold)
      << "\nhistogram_bins = " << c.n4.histogram_bins << "\nfwhm = " << format_double(c.n4.fwhm)
      << "\nwiener_noise = " << format_double(c.n4.wiener_noise)
      << "\nfield_smoothing_sigma = " << format_double(c.n4.field_smoothing_sigma)
      << "\n\n[denoise]\nmethod = " << denoise_method_name(c.denoise_method)
      << "\ngaussian_sigma = " << format_double(c.gaussian_sigma) << "\n\n[bm3d]\n";
    if (c.bm3d_sigma_set) o << "sigma = " << format_double(c.bm3d.sigma) << "\n";
    o << "block_size = " << c.bm3d.block_size << "\nsearch_window = " << c.bm3d.search_window
      << "\nmax_group_size = " << c.bm3d.max_group_size << "\nstep = " << c.bm3d.step
      << "\nmatch_threshold_stage1 = " << format_double(c.bm3d.match_threshold_stage1)
      << "\nmatch_threshold_stage2 = " << format_double(c.bm3d.match_threshold_stage2)
      << "\nhard_threshold_multiplier = " << format_double(c.bm3d.hard_threshold_multiplier)
      << "\n\n[tv]\nweight = " << format_double(c.tv.weight) << "\nmax_iters = " << c.tv.max_iters
      << "\ntol = " << format_double(c.tv.tol) << "\n\n[strip]\ncutoff = " << format_double(c.strip.cutoff)
      << "\nclosing_radius = " << c.strip.closing_radius
      << "\n\n[augment]\nrotation_range = " << format_double(c.augment.rotation_range)
      << "\nwidth_shift = " << format_double(c.augment.width_shift)
      << "\nheight_shift = " << format_double(c.augment.height_shift) << "\nhflip = " << format_bool(c.augment.hflip)
      << "\nvflip = " << format_bool(c.augment.vflip)
      << "\nfill = " << (c.augment.fill == Border::zero ? "zero" : "reflect") << "\ntarget = " << c.augment_target
      << "\n\n[train]\nlearning_rate = " << format_double(c.train.learning_rate)
      << "\nbatch_size = " << c.train.batch_size << "\nepochs = " << c.train.epochs
      << "\ndropout_rate = " << format_double(c.train.dropout_rate)
      << "\nplateau_patience = " << c.train.plateau_patience
      << "\nplateau_factor = " << format_double(c.train.plateau_factor)
      << "\nmin_lr = " << format_double(c.train.min_lr) << "\n\n[model]\nwidths = ";
    for (std::size_t i = 0; i < c.widths.size(); ++i) o << (i ? "," : "") << c.widths[i];
    o << "\n";
    return o.str();
}

}  // namespace mriprep::pipeline

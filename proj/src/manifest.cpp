#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "mriprep/errors.hpp"
#include "mriprep/log.hpp"
#include "mriprep/pipeline.hpp"

namespace mriprep::pipeline {

namespace fs = std::filesystem;

const char* split_name(SplitKind split) noexcept {
    switch (split) {
        case SplitKind::train: return "train";
        case SplitKind::val: return "val";
        case SplitKind::test: return "test";
    }
    return "train";
}

SplitKind parse_split(const std::string& name) {
    if (name == "train") return SplitKind::train;
    if (name == "val") return SplitKind::val;
    if (name == "test") return SplitKind::test;
    throw ArgumentError("unknown split '" + name + "' (expected train, val or test)");
}

void SplitFractions::validate() const {
    if (!(train >= 0.0 && val >= 0.0 && test >= 0.0)) throw ArgumentError("split: fractions must be >= 0");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw ArgumentError("split: fractions must sum to 1");
}

std::size_t DatasetManifest::total() const noexcept {
    std::size_t n = 0;
    for (std::size_t c : counts) n += c;
    return n;
}

std::vector<const ManifestEntry*> DatasetManifest::split(SplitKind kind) const {
    std::vector<const ManifestEntry*> out;
    for (const ManifestEntry& e : entries)
        if (e.split == kind) out.push_back(&e);
    return out;
}

fs::path DatasetManifest::resolve(const ManifestEntry& entry) const { return root / fs::path(entry.path); }

namespace {

constexpr std::string_view kMagic = "mriprep-manifest 1";

int class_index(std::string_view name) {
    for (int k = 0; k < metrics::kNumClasses; ++k)
        if (metrics::kClassNames[k] == name) return k;
    return -1;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    return std::mt19937_64(seq);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& engine) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>((static_cast<unsigned __int128>(engine()) * i) >> 64);
        std::swap(v[i - 1], v[j]);
    }
}

[[noreturn]] void malformed(std::size_t line, const std::string& why) {
    throw LayoutError("manifest line " + std::to_string(line) + ": " + why);
}

std::uint64_t parse_u64(std::string_view text, std::size_t line) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) malformed(line, "bad number");
    return v;
}

}  // namespace

std::string DatasetManifest::to_text() const {
    std::string out(kMagic);
    out += "\nroot " + root.generic_string() + "\nseed " + std::to_string(seed) + "\n";
    for (int k = 0; k < metrics::kNumClasses; ++k)
        out += "count " + std::string(metrics::kClassNames[k]) + " " + std::to_string(counts[k]) + "\n";
    for (const ManifestEntry& e : entries)
        out += std::string(split_name(e.split)) + " " + std::string(metrics::kClassNames[e.label]) + " " + e.path +
               "\n";
    return out;
}

DatasetManifest DatasetManifest::parse(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    DatasetManifest m;
    if (!std::getline(in, line) || line != kMagic) throw LayoutError("not a manifest (missing header)");
    ++n;
    bool have_root = false, have_seed = false;
    std::array<bool, metrics::kNumClasses> have_count{};
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const std::size_t sp = line.find(' ');
        if (sp == std::string::npos) malformed(n, "expected '<key> <value>'");
        const std::string key = line.substr(0, sp);
        const std::string rest = line.substr(sp + 1);
        if (key == "root") {
            m.root = fs::path(rest);
            have_root = true;
        } else if (key == "seed") {
            m.seed = parse_u64(rest, n);
            have_seed = true;
        } else if (key == "count") {
            const std::size_t sp2 = rest.find(' ');
            const int k = sp2 == std::string::npos ? -1 : class_index(rest.substr(0, sp2));
            if (k < 0) malformed(n, "unknown class in count");
            m.counts[k] = parse_u64(rest.substr(sp2 + 1), n);
            have_count[k] = true;
        } else {
            SplitKind split;
            try {
                split = parse_split(key);
            } catch (const ArgumentError&) {
                malformed(n, "unknown key '" + key + "'");
            }
            const std::size_t sp2 = rest.find(' ');
            const int k = sp2 == std::string::npos ? -1 : class_index(rest.substr(0, sp2));
            if (k < 0) malformed(n, "unknown class");
            const std::string path = rest.substr(sp2 + 1);
            if (path.empty()) malformed(n, "empty path");
            m.entries.push_back({path, k, split});
        }
    }
    if (!have_root || !have_seed) throw LayoutError("manifest: missing root or seed");
    if (!std::all_of(have_count.begin(), have_count.end(), [](bool b) { return b; }))
        throw LayoutError("manifest: missing class counts");
    std::array<std::size_t, metrics::kNumClasses> seen{};
    for (const ManifestEntry& e : m.entries) ++seen[e.label];
    if (seen != m.counts) throw LayoutError("manifest: class counts do not match the entries");
    return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << manifest.to_text();
    if (!out) throw IoError("write failed for " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    DatasetManifest m = DatasetManifest::parse(text.str());
    if (m.root.is_relative()) m.root = path.parent_path() / m.root;
    return m;
}

bool is_image_file(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

DatasetManifest ingest(const fs::path& root, std::uint64_t seed, const SplitFractions& fractions) {
    fractions.validate();
    if (!fs::is_directory(root)) throw LayoutError("dataset root is not a directory: " + root.string());
    DatasetManifest m;
    m.root = root;
    m.seed = seed;
    for (int k = 0; k < metrics::kNumClasses; ++k) {
        const std::string cls(metrics::kClassNames[k]);
        const fs::path dir = root / cls;
        if (!fs::is_directory(dir)) throw LayoutError("missing class directory: " + dir.string());
        std::vector<std::string> files;
        for (const auto& item : fs::recursive_directory_iterator(dir)) {
            if (!item.is_regular_file() || !is_image_file(item.path())) continue;
            if (item.path().filename().string().starts_with(".")) continue;
            files.push_back(fs::relative(item.path(), root).generic_string());
        }
        std::sort(files.begin(), files.end());
        m.counts[k] = files.size();
        if (files.empty()) log::warn("ingest: class '" + cls + "' has no images");

        // Shuffled order decides the split; entries stay in sorted order.
        std::vector<std::size_t> order(files.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto engine = stream(seed, static_cast<std::uint64_t>(k), 0x1e57u);
        shuffle(order, engine);
        const double n = static_cast<double>(files.size());
        auto n_test = static_cast<std::size_t>(std::llround(fractions.test * n));
        auto n_val = static_cast<std::size_t>(std::llround(fractions.val * n));
        n_test = std::min(n_test, files.size());
        n_val = std::min(n_val, files.size() - n_test);
        std::vector<SplitKind> assigned(files.size(), SplitKind::train);
        for (std::size_t i = 0; i < n_test; ++i) assigned[order[i]] = SplitKind::test;
        for (std::size_t i = n_test; i < n_test + n_val; ++i) assigned[order[i]] = SplitKind::val;
        for (std::size_t i = 0; i < files.size(); ++i) m.entries.push_back({files[i], k, assigned[i]});
    }
    return m;
}

std::vector<augment::ClassCount> class_counts(const DatasetManifest& manifest) {
    std::vector<augment::ClassCount> out;
    for (int k = 0; k < metrics::kNumClasses; ++k)
        out.push_back({std::string(metrics::kClassNames[k]), manifest.counts[k]});
    return out;
}

}  // namespace mriprep::pipeline

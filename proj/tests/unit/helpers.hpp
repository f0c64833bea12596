#pragma once

#include <filesystem>
#include <string>

#include "mriprep/image.hpp"
#include "mriprep/phantom.hpp"

namespace testing {

// Fresh per-test directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / ("mriprep_test_" + name)) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline mriprep::Image random_image(int w, int h, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    mriprep::phantom::Rng rng(seed, 0x7e57);
    mriprep::Image image(w, h);
    for (double& v : image.pixels()) v = rng.uniform(lo, hi);
    return image;
}

inline double max_abs_diff(const mriprep::Image& a, const mriprep::Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.pixels()[i] - b.pixels()[i]));
    return m;
}

}  // namespace testing

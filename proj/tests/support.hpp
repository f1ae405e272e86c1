#pragma once

#include <filesystem>
#include <random>
#include <string>

// Fresh per-test scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::path(MOA_TEST_BINARY_DIR) / "scratch" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path demo_dir() { return std::filesystem::path(MOA_SOURCE_DIR) / "data" / "demo"; }

#pragma once

#include "xrdl/byte_io.hpp"
#include "xrdl/rng.hpp"
#include "xrdl/tensor.hpp"

#include <filesystem>
#include <string>
#include <unistd.h>

namespace xrdl::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class temp_dir {
  public:
    temp_dir() {
        static std::uint64_t counter = 0;
        rng gen(static_cast<std::uint64_t>(::getpid()) * 1000003u + counter++);
        path_ = std::filesystem::temp_directory_path() / ("xrdl-test-" + std::to_string(gen.next_u64() % 1000000000));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    temp_dir(const temp_dir&) = delete;
    temp_dir& operator=(const temp_dir&) = delete;
    ~temp_dir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

template <scalar T>
tensor<T> random_tensor(shape_t dims, rng& gen, double lo = -1.0, double hi = 1.0) {
    tensor<T> t(std::move(dims));
    for (auto& v : t.values()) {
        v = static_cast<T>(gen.uniform(lo, hi));
    }
    return t;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    atomic_write(path, text);
}

inline std::string read_text(const std::filesystem::path& path) {
    const bytes b = read_file(path);
    return std::string(b.begin(), b.end());
}

/// Every regular file below `root`, relative paths, sorted.
inline std::vector<std::string> list_files(const std::filesystem::path& root) {
    std::vector<std::string> out;
    if (!std::filesystem::exists(root)) {
        return out;
    }
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            out.push_back(std::filesystem::relative(e.path(), root).string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace xrdl::testing

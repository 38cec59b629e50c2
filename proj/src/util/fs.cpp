#include "ttc/util/fs.hpp"
#include "ttc/errors.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace fs = std::filesystem;

namespace ttc::util {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EnvironmentError("cannot open file: " + path.string());
    std::ostringstream oss;
    oss << in.rdbuf();
    return oss.str();
}

void write_file(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw EnvironmentError("cannot write file: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

void copy_tree(const fs::path& from, const fs::path& to) {
    fs::create_directories(to);
    fs::copy(from, to,
             fs::copy_options::recursive | fs::copy_options::copy_symlinks |
                 fs::copy_options::overwrite_existing);
}

fs::path make_temp_dir(const std::string& prefix) {
    static std::atomic<std::uint64_t> counter{0};
    fs::path base = fs::temp_directory_path();
    for (int attempt = 0; attempt < 64; ++attempt) {
        fs::path candidate = base / (prefix + "-" + std::to_string(::getpid()) + "-" +
                                     std::to_string(counter.fetch_add(1)));
        std::error_code ec;
        if (fs::create_directories(candidate, ec) && !ec) return candidate;
    }
    throw EnvironmentError("cannot create temp directory under " + base.string());
}

TempDir::~TempDir() {
    if (!path_.empty()) {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
}

} // namespace ttc::util

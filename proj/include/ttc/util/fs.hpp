#pragma once
#include <filesystem>
#include <string>

namespace ttc::util {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Recursive copy that preserves permission bits (scripts stay executable).
void copy_tree(const std::filesystem::path& from, const std::filesystem::path& to);

// Creates a unique directory under the system temp root. Caller owns cleanup
// (TempDir below does it automatically).
std::filesystem::path make_temp_dir(const std::string& prefix);

class TempDir {
public:
    explicit TempDir(const std::string& prefix) : path_(make_temp_dir(prefix)) {}
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    TempDir(TempDir&& other) noexcept : path_(std::move(other.path_)) { other.path_.clear(); }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace ttc::util

#pragma once
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>

namespace ttc::util {

struct ResourceCaps {
    std::chrono::milliseconds wall_limit{30000};
    std::uint64_t memory_bytes = 1ull << 30;
    std::uint64_t cpu_seconds = 30;
};

struct RunResult {
    int exit_code = -1;
    bool timed_out = false;
    bool signaled = false;
    std::string stdout_text;
    std::string stderr_text;
    std::chrono::milliseconds wall_time{0};
};

// Runs `command` through /bin/sh -c in `workdir` with the given caps.
// The child gets its own process group so a timeout kills the whole tree.
RunResult run_command(const std::string& command,
                      const std::filesystem::path& workdir,
                      const ResourceCaps& caps = {});

} // namespace ttc::util

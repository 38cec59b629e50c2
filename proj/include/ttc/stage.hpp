#pragma once
#include <string>

namespace ttc {

// The four phases of the issue-resolution pipeline.
enum class Stage {
    repo_understanding,
    fault_localization,
    patch_generation,
    patch_verification,
};

inline const char* stage_name(Stage s) {
    switch (s) {
    case Stage::repo_understanding: return "repo_understanding";
    case Stage::fault_localization: return "fault_localization";
    case Stage::patch_generation: return "patch_generation";
    case Stage::patch_verification: return "patch_verification";
    }
    return "unknown";
}

Stage stage_from_name(const std::string& name);

} // namespace ttc

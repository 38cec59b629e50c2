#pragma once
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace ttc::patchops {

// One line in a hunk body: ' ' context, '-' removal, '+' addition.
struct HunkLine {
    char tag = ' ';
    std::string text;
};

struct Hunk {
    std::size_t old_start = 0;
    std::size_t old_count = 0;
    std::size_t new_start = 0;
    std::size_t new_count = 0;
    std::string section; // trailing "@@ ... @@ section" text, often a function name
    std::vector<HunkLine> lines;
};

struct FilePatch {
    std::string old_path; // empty means /dev/null (file creation)
    std::string new_path; // empty means /dev/null (file deletion)
    std::vector<Hunk> hunks;

    // The path this file patch is filed under: new_path, or old_path for
    // deletions.
    const std::string& path() const { return new_path.empty() ? old_path : new_path; }
};

struct Patch {
    std::string raw;
    std::vector<FilePatch> files;
    std::set<std::string> touched_files;

    bool empty() const { return files.empty(); }
};

// Strict unified-diff parser. Hunk header counts must match the body;
// binary-diff markers and truncated hunks are parse errors naming the line.
// Empty input parses to an empty no-op patch.
Patch parse_diff(const std::string& raw);

// Re-renders the parsed structure as a unified diff.
std::string render(const Patch& patch);

struct NormalizedPatch {
    std::string canonical;
    std::string fingerprint;   // sha256 of canonical, lowercase hex
    bool fallback_used = false; // an unknown language tag forced whitespace-only rules
};

// Surface-invariant canonical form: per file, the added and removed token
// streams with comments stripped per the language tag and whitespace
// collapsed. Tags: "python", "sh", "cpp", "c", "js", "go", "rust".
// Unknown tags fall back to whitespace-only canonicalization.
NormalizedPatch normalize(const Patch& patch,
                          const std::map<std::string, std::string>& language_by_file);

// Convenience: infer language tags from file extensions.
NormalizedPatch normalize(const Patch& patch);

std::string language_from_path(const std::string& path);

// Tokenizes one edit stream (comment stripping + whitespace collapsing);
// the primitive under normalize(), exposed for the similarity fallback.
std::vector<std::string> edit_stream_tokens(const std::string& text,
                                            const std::string& language);

// Majority vote over fingerprint-equivalence classes. Input order is
// generation order; ties go to the class whose first member came earliest.
const Patch& vote(const std::vector<Patch>& patches,
                  const std::map<std::string, std::string>& language_by_file = {});

} // namespace ttc::patchops

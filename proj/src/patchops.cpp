#include "ttc/patchops.hpp"
#include "ttc/errors.hpp"
#include "ttc/util/sha256.hpp"
#include "ttc/util/strings.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace ttc::patchops {

namespace {

std::string strip_diff_prefix(std::string path) {
    if (path == "/dev/null") return "";
    if (util::starts_with(path, "a/") || util::starts_with(path, "b/"))
        return path.substr(2);
    return path;
}

// "--- a/path<TAB>timestamp" -> "a/path"
std::string header_path(const std::string& line, std::size_t line_no) {
    std::string rest = line.substr(4);
    std::size_t tab = rest.find('\t');
    if (tab != std::string::npos) rest = rest.substr(0, tab);
    rest = util::trim(rest);
    if (rest.empty())
        throw ParseError("diff line " + std::to_string(line_no) + ": empty file path");
    return strip_diff_prefix(rest);
}

struct HunkHeader {
    std::size_t old_start, old_count, new_start, new_count;
    std::string section;
};

bool parse_hunk_header(const std::string& line, HunkHeader& out) {
    // @@ -l[,s] +l[,s] @@ [section]
    if (!util::starts_with(line, "@@ -")) return false;
    std::size_t pos = 4;
    auto read_num = [&](std::size_t& value) -> bool {
        std::size_t begin = pos;
        while (pos < line.size() && std::isdigit(static_cast<unsigned char>(line[pos]))) ++pos;
        if (pos == begin) return false;
        value = std::stoul(line.substr(begin, pos - begin));
        return true;
    };
    HunkHeader h{0, 1, 0, 1, ""};
    if (!read_num(h.old_start)) return false;
    if (pos < line.size() && line[pos] == ',') {
        ++pos;
        if (!read_num(h.old_count)) return false;
    }
    if (pos + 2 > line.size() || line[pos] != ' ' || line[pos + 1] != '+') return false;
    pos += 2;
    if (!read_num(h.new_start)) return false;
    if (pos < line.size() && line[pos] == ',') {
        ++pos;
        if (!read_num(h.new_count)) return false;
    }
    if (line.compare(pos, 3, " @@") != 0) return false;
    pos += 3;
    if (pos < line.size()) h.section = util::trim(line.substr(pos));
    out = h;
    return true;
}

} // namespace

Patch parse_diff(const std::string& raw) {
    Patch patch;
    patch.raw = raw;

    auto lines = util::split_lines(raw);
    std::size_t i = 0;
    auto line_no = [&i] { return i + 1; };

    while (i < lines.size()) {
        const std::string& line = lines[i];
        if (util::starts_with(line, "Binary files") || util::starts_with(line, "GIT binary patch"))
            throw ParseError("diff line " + std::to_string(line_no()) +
                             ": binary diffs are not supported");
        if (!util::starts_with(line, "--- ")) {
            // Preamble between file sections: "diff --git", "index ...", mode
            // lines, or prose. A bare hunk header here means a missing header.
            if (util::starts_with(line, "@@ "))
                throw ParseError("diff line " + std::to_string(line_no()) +
                                 ": hunk without ---/+++ file header");
            ++i;
            continue;
        }

        FilePatch file;
        file.old_path = header_path(line, line_no());
        ++i;
        if (i >= lines.size() || !util::starts_with(lines[i], "+++ "))
            throw ParseError("diff line " + std::to_string(line_no()) +
                             ": expected +++ header after ---");
        file.new_path = header_path(lines[i], line_no());
        ++i;
        if (file.old_path.empty() && file.new_path.empty())
            throw ParseError("diff line " + std::to_string(line_no()) +
                             ": both sides are /dev/null");

        bool saw_hunk = false;
        while (i < lines.size() && util::starts_with(lines[i], "@@ ")) {
            HunkHeader header;
            std::size_t header_line = line_no();
            if (!parse_hunk_header(lines[i], header))
                throw ParseError("diff line " + std::to_string(header_line) +
                                 ": malformed hunk header '" + lines[i] + "'");
            ++i;
            Hunk hunk;
            hunk.old_start = header.old_start;
            hunk.old_count = header.old_count;
            hunk.new_start = header.new_start;
            hunk.new_count = header.new_count;
            hunk.section = header.section;

            std::size_t old_seen = 0, new_seen = 0;
            while (i < lines.size() && (old_seen < hunk.old_count || new_seen < hunk.new_count)) {
                const std::string& body = lines[i];
                if (util::starts_with(body, "\\ No newline")) {
                    ++i;
                    continue;
                }
                char tag = body.empty() ? ' ' : body[0];
                if (tag != ' ' && tag != '-' && tag != '+') break;
                hunk.lines.push_back({tag, body.empty() ? "" : body.substr(1)});
                if (tag != '+') ++old_seen;
                if (tag != '-') ++new_seen;
                ++i;
            }
            if (old_seen != hunk.old_count || new_seen != hunk.new_count)
                throw ParseError("diff line " + std::to_string(header_line) +
                                 ": hunk body has " + std::to_string(old_seen) + "/" +
                                 std::to_string(new_seen) + " lines, header claims " +
                                 std::to_string(hunk.old_count) + "/" +
                                 std::to_string(hunk.new_count));
            // Skip a trailing no-newline marker belonging to this hunk.
            if (i < lines.size() && util::starts_with(lines[i], "\\ No newline")) ++i;
            file.hunks.push_back(std::move(hunk));
            saw_hunk = true;
        }
        if (!saw_hunk)
            throw ParseError("diff line " + std::to_string(line_no()) +
                             ": file section for '" + file.path() + "' has no hunks");
        patch.touched_files.insert(file.path());
        patch.files.push_back(std::move(file));
    }
    return patch;
}

std::string render(const Patch& patch) {
    std::ostringstream out;
    for (const auto& file : patch.files) {
        out << "--- " << (file.old_path.empty() ? "/dev/null" : "a/" + file.old_path) << "\n";
        out << "+++ " << (file.new_path.empty() ? "/dev/null" : "b/" + file.new_path) << "\n";
        for (const auto& hunk : file.hunks) {
            out << "@@ -" << hunk.old_start << "," << hunk.old_count << " +" << hunk.new_start
                << "," << hunk.new_count << " @@";
            if (!hunk.section.empty()) out << " " << hunk.section;
            out << "\n";
            for (const auto& line : hunk.lines) out << line.tag << line.text << "\n";
        }
    }
    return out.str();
}

std::string language_from_path(const std::string& path) {
    auto dot = path.rfind('.');
    if (dot == std::string::npos) return "";
    std::string ext = util::lowercase(path.substr(dot + 1));
    if (ext == "py") return "python";
    if (ext == "sh" || ext == "bash") return "sh";
    if (ext == "c" || ext == "h") return "c";
    if (ext == "cc" || ext == "cpp" || ext == "cxx" || ext == "hpp" || ext == "hxx")
        return "cpp";
    if (ext == "js" || ext == "mjs" || ext == "ts") return "js";
    if (ext == "go") return "go";
    if (ext == "rs") return "rust";
    return "";
}

namespace {

struct CommentSyntax {
    std::vector<std::string> line_markers;
    std::string block_open;
    std::string block_close;
    bool known = false;
};

CommentSyntax comment_syntax(const std::string& language) {
    if (language == "python" || language == "sh") return {{"#"}, "", "", true};
    if (language == "cpp" || language == "c" || language == "js" || language == "go" ||
        language == "rust")
        return {{"//"}, "/*", "*/", true};
    return {};
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

} // namespace

std::vector<std::string> edit_stream_tokens(const std::string& text,
                                            const std::string& language) {
    CommentSyntax syntax = comment_syntax(language);
    std::vector<std::string> tokens;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        // String literals survive as single tokens; comment markers inside
        // them must not trigger stripping.
        if (c == '"' || c == '\'') {
            char quote = c;
            std::string lit(1, quote);
            ++i;
            while (i < n) {
                lit += text[i];
                if (text[i] == '\\' && i + 1 < n) {
                    lit += text[i + 1];
                    i += 2;
                    continue;
                }
                if (text[i] == quote || text[i] == '\n') {
                    ++i;
                    break;
                }
                ++i;
            }
            tokens.push_back(std::move(lit));
            continue;
        }
        if (syntax.known) {
            bool stripped = false;
            for (const auto& marker : syntax.line_markers) {
                if (text.compare(i, marker.size(), marker) == 0) {
                    while (i < n && text[i] != '\n') ++i;
                    stripped = true;
                    break;
                }
            }
            if (stripped) continue;
            if (!syntax.block_open.empty() &&
                text.compare(i, syntax.block_open.size(), syntax.block_open) == 0) {
                std::size_t close = text.find(syntax.block_close, i + syntax.block_open.size());
                i = close == std::string::npos ? n : close + syntax.block_close.size();
                continue;
            }
        }
        if (is_word_char(c)) {
            std::size_t begin = i;
            while (i < n && is_word_char(text[i])) ++i;
            tokens.push_back(text.substr(begin, i - begin));
            continue;
        }
        tokens.push_back(std::string(1, c));
        ++i;
    }
    return tokens;
}

NormalizedPatch normalize(const Patch& patch,
                          const std::map<std::string, std::string>& language_by_file) {
    // Canonical form: per file (sorted), the removed and added token streams.
    // Context lines, line numbers, comments, and whitespace runs all vanish.
    std::map<std::string, std::pair<std::string, std::string>> streams; // path -> (-, +)
    for (const auto& file : patch.files) {
        auto& [removed, added] = streams[file.path()];
        for (const auto& hunk : file.hunks) {
            for (const auto& line : hunk.lines) {
                if (line.tag == '-') removed += line.text + "\n";
                if (line.tag == '+') added += line.text + "\n";
            }
        }
    }

    NormalizedPatch result;
    std::ostringstream canon;
    for (const auto& [path, pair] : streams) {
        std::string language;
        if (auto it = language_by_file.find(path); it != language_by_file.end())
            language = it->second;
        else
            language = language_from_path(path);
        if (!comment_syntax(language).known) result.fallback_used = true;

        canon << "file " << path << "\n";
        canon << "-:";
        for (const auto& tok : edit_stream_tokens(pair.first, language)) canon << " " << tok;
        canon << "\n+:";
        for (const auto& tok : edit_stream_tokens(pair.second, language)) canon << " " << tok;
        canon << "\n";
    }
    result.canonical = canon.str();
    result.fingerprint = util::sha256_hex(result.canonical);
    return result;
}

NormalizedPatch normalize(const Patch& patch) { return normalize(patch, {}); }

const Patch& vote(const std::vector<Patch>& patches,
                  const std::map<std::string, std::string>& language_by_file) {
    if (patches.empty()) throw ContractError("vote over an empty patch list");
    std::map<std::string, std::pair<std::size_t, std::size_t>> classes; // fp -> (count, first)
    for (std::size_t i = 0; i < patches.size(); ++i) {
        std::string fp = normalize(patches[i], language_by_file).fingerprint;
        auto [it, inserted] = classes.emplace(fp, std::make_pair(std::size_t{0}, i));
        it->second.first += 1;
        if (inserted) it->second.second = i;
    }
    std::size_t best_index = 0, best_count = 0;
    for (const auto& [fp, info] : classes) {
        auto [count, first] = info;
        if (count > best_count || (count == best_count && first < best_index)) {
            best_count = count;
            best_index = first;
        }
    }
    return patches[best_index];
}

} // namespace ttc::patchops

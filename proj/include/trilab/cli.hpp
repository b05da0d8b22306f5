#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "trilab/base.hpp"

namespace trilab::cli {

struct ConfigEntry {
    std::string value;
    int line = 0;  // 0 means "command line"
};

/// Flat key-value store filled from config files and CLI flag overrides.
class KeyValues {
public:
    /// Parses `key = value` lines; '#' starts a comment, blanks are skipped.
    static KeyValues parse_text(const std::string& text);

    void set(const std::string& key, const std::string& value, int line = 0);
    bool has(const std::string& key) const { return entries_.count(key) > 0; }
    const ConfigEntry* find(const std::string& key) const;
    const std::map<std::string, ConfigEntry>& entries() const { return entries_; }

    /// Sorted `key = value` lines; the canonical form used for hashing and echo.
    std::string canonical_text() const;

private:
    std::map<std::string, ConfigEntry> entries_;
};

struct RunConfig {
    std::string task;
    KeyValues keys;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out_dir = ".";
};

/// Validated run configuration from canonical config text. Throws ConfigError
/// naming the offending key and line on unknown keys, range violations or
/// missing required keys.
RunConfig parse_config(const std::string& text);

/// Validated run configuration from command-line arguments: subcommand words
/// followed by `--key value` overrides; `--config FILE` loads a file first
/// (flags win).
RunConfig parse_args(const std::vector<std::string>& args);

/// Executes the task. Returns 0 on success; ConfigError maps to 1 and
/// InvariantError to 2 in main().
int run(const RunConfig& config);

/// Known task names, for diagnostics.
const std::vector<std::string>& task_names();

// Formatting helpers shared by the emitters (17 significant digits).
std::string format_double(double v);

/// Minimal RFC-4180 CSV writer: mandatory header, '.' decimal separator.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void row(const std::vector<std::string>& fields);
    const std::string& text() const { return text_; }

private:
    std::size_t columns_;
    std::string text_;
};

}  // namespace trilab::cli

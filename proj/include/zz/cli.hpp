#pragma once

// Flat key=value run configuration and the zzscale command-line front end.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "zz/asymptotics.hpp"
#include "zz/experiments.hpp"

namespace zz::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kAssertionFailure = 1, kConfigFailure = 2, kRuntimeFailure = 3 };

struct RunConfig {
    ExperimentConfig experiment;
    /// Root seed; empty means a fresh one is drawn at run time.
    std::optional<std::uint64_t> seed;
    /// Dataset CSV for `sample`; empty means generate from the truth.
    std::string data_file;
    OUStart ou_start = OUStart::Stationary;
};

struct KeyInfo {
    std::string name;
    std::string help;
};

/// Every accepted key, in emission order.
const std::vector<KeyInfo>& config_keys();

/// One `key = value` line; `line` is 0 for command-line overrides.
struct Assignment {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

/// Splits config text into assignments. Blank lines and `#` comments are
/// skipped. Throws ConfigError with the line number on malformed lines.
std::vector<Assignment> read_assignments(const std::string& text);

/// Applies assignments in order (later ones win) to the defaults. When no
/// truth key is given the data law follows the model family. Unknown keys and
/// bad values throw ConfigError naming the key and line.
RunConfig build_config(const std::vector<Assignment>& assignments);

RunConfig parse_config(const std::string& text);

/// All keys with their current values; parse_config(emit_config(c)) emits the
/// same text.
std::string emit_config(const RunConfig& config);

/// Grid syntax: comma-separated items, each an integer, `b^k`, or the power
/// range `b^j..b^k` with optional `:step` on the exponent.
std::vector<std::size_t> parse_n_grid(const std::string& text);

/// Parses arguments and runs one subcommand. Returns an ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Text listing every config key with its help line.
std::string key_reference();

}  // namespace zz::cli

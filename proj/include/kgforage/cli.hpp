#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kgforage {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_runtime = 2 };

// Entry point for the kgforage command. `args` excludes the program name.
//   discover --input <csv> --column <name> [--backend <sel>] [--seed N]
//            [--format tsv|json] [--sample-size N] [--top-k N]
//   join     --input <csv> --plans <json> --output <csv> [--sidecar <json>]
//            [--backend <sel>] [--seed N]
//   serve    [--host H] [--port N] [--backend <sel>]... [--ui-dir D]
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kgforage

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace viteraser::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

struct CliInvocation {
  std::string command;  // make-data | pretrain | finetune-encoder | train | erase | eval
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, applied after the config file
  std::string in;
  std::string out;
  std::string ckpt;
  std::string gt;
  std::optional<std::uint64_t> seed;
  std::string device = "cpu";
  std::int64_t count = 32;
  std::int64_t size = 64;
  std::string format = "both";  // eval report: csv | summary | both
};

// Parses argv. Returns the exit code to stop with (usage error or --help)
// or nothing when `inv` is ready to run.
std::optional<int> parse_args(int argc, const char* const* argv, CliInvocation& inv, std::ostream& out,
                              std::ostream& err);

// Runs one command. Errors are reported as a single line on `err`; runtime
// failures leave a FAILED marker in the output directory.
int run(const CliInvocation& inv, std::ostream& out, std::ostream& err);

}  // namespace viteraser::cli

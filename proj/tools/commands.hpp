#pragma once

// Subcommands of the `lfdet` binary. Each returns the process exit status:
// 0 pass, 1 check failure, 2 usage, configuration or input error.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lfdet::cli {

inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitUsage = 2;

struct GradcheckArgs {
  std::string scope;
  double perturb = 0.0;
  std::uint64_t seed = 0;
};
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err);

struct CostReportArgs {
  std::string config;  // empty: built-in defaults
  std::string output;  // empty or "-": stdout
  std::optional<std::string> format;
};
int cmd_cost_report(const CostReportArgs& args, std::ostream& out, std::ostream& err);

struct AssignArgs {
  std::string scene;
  std::optional<double> lambda;
  std::string output;
};
int cmd_assign(const AssignArgs& args, std::ostream& out, std::ostream& err);

struct TrainToyArgs {
  std::string config;
  std::optional<std::size_t> steps;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::string output;
};
int cmd_train_toy(const TrainToyArgs& args, std::ostream& out, std::ostream& err);

using BenchSize = std::array<std::size_t, 3>;  // C, H, W
struct BenchArgs {
  std::vector<BenchSize> sizes;
  std::size_t repeats = 3;
};
int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err);

struct LfsaCheckArgs {
  std::size_t instances = 20;
  std::uint64_t seed = 0;
};
int cmd_lfsa_check(const LfsaCheckArgs& args, std::ostream& out, std::ostream& err);

/// Full command line, as main() sees it.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lfdet::cli

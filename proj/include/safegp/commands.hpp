#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace safegp {

// Exit codes shared by all commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInfeasibleHalt = 3;
inline constexpr int kExitIo = 4;

inline constexpr int kSchemaVersion = 1;

struct CommandArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

int cmd_fit(const CommandArgs& args);
int cmd_simulate(const CommandArgs& args);
int cmd_compare_gp(const CommandArgs& args);
int cmd_trigger(const CommandArgs& args);

}  // namespace safegp

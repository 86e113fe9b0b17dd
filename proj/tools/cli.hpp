#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace blockforge::cli {

// Exit codes: 0 success, 1 run failure (divergence, checkpoint mismatch),
// 2 usage error (bad flags, missing inputs, refusing to overwrite output).
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// args excludes the program name; args[0] is the command.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_train(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_eval(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_noise_sweep(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_render_psi(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace blockforge::cli

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "celeganser/config.hpp"
#include "celeganser/synthgen.hpp"

namespace celeganser::commands {

/// Entry point shared by the CLI and in-process callers. `args[0]` is the
/// command name. Returns the process exit code; failures print one line
/// "error <code>: <message>" to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Accepted keys and their defaults for a command (kConfig if unknown).
std::map<std::string, std::string> defaults_for(const std::string& command);

/// "gen.*" keys and "canvas" mapped onto generator parameters.
synth::GenParams gen_params_from(const config::RunConfig& cfg);

void cmd_synth(const config::RunConfig& cfg, std::ostream& log);
void cmd_train(const config::RunConfig& cfg, std::ostream& log);
void cmd_eval(const config::RunConfig& cfg, std::ostream& log);
void cmd_infer(const config::RunConfig& cfg, std::ostream& log);
void cmd_straighten(const config::RunConfig& cfg, std::ostream& log);

struct MaskStudyTable {
  std::vector<std::string> inits;  // rows
  std::vector<std::string> modes;  // columns
  std::vector<std::vector<double>> mae;
};
MaskStudyTable cmd_maskstudy(const config::RunConfig& cfg, std::ostream& log);

/// Returns true when every check passed.
bool cmd_gradcheck(const config::RunConfig& cfg, std::ostream& log);

}  // namespace celeganser::commands

#pragma once

// Subcommand implementations behind the rfnet executable. Each takes the
// resolved key=value configuration, writes its outputs plus a run.json
// provenance record, and returns a process exit code (0 ok, 1 usage, 2
// verification failure, 3 I/O).

#include <iosfwd>
#include <string>

#include "rfnet/config.hpp"

namespace rfnet {

inline constexpr const char* kCodeVersion = "rfnet-1.0.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitVerification = 2;
inline constexpr int kExitIo = 3;

int cmd_gen_data(const KeyValueConfig& cfg, std::ostream& out);
int cmd_train(const KeyValueConfig& cfg, std::ostream& out);
int cmd_eval(const KeyValueConfig& cfg, std::ostream& out);
int cmd_grad_check(const KeyValueConfig& cfg, std::ostream& out);
int cmd_ablate(const KeyValueConfig& cfg, std::ostream& out);
int cmd_lambda_report(const KeyValueConfig& cfg, std::ostream& out);

// Maps thrown errors onto the exit-code contract.
int run_command(const std::string& name, const KeyValueConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace rfnet

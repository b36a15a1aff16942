#pragma once

namespace prodehaze::pipeline {

// Entry point of the `prodehaze` tool. Returns the process exit code: 0 on
// success, 1 on a library error, 2 on a usage error. Failures print
// {"error": {"code": ..., "message": ...}} on stderr.
int run_cli(int argc, char** argv);

}  // namespace prodehaze::pipeline

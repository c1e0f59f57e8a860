#pragma once

namespace lmlab::cli {

// Exit status: 0 success, 1 usage error, 2 runtime failure.
int run(int argc, char** argv);

}  // namespace lmlab::cli

#pragma once

namespace ltvs {

/// Entry point behind the ltv-sentinel binary. Exit codes: 0 success,
/// 1 usage/config error, 2 numerical or infeasibility error, 3 divergence.
int run_cli(int argc, const char* const* argv);

}  // namespace ltvs

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fbground/continuation.hpp"
#include "fbground/spectral.hpp"

namespace fbground {

enum ExitCode : int { exit_ok = 0, exit_verification = 1, exit_config = 2, exit_solver = 3 };

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct VerifyToggles {
    bool fbc = true;
    bool nondegeneracy = true;
    bool bounds = true;
    bool sandwich = true;
};

struct RunConfig {
    // [grid]
    int dim = 3;
    std::vector<double> extents{1.0, 1.0, 1.0};
    std::vector<int> nodes{33, 33, 33};
    // [nonlinearity]
    NonlinearityKind kind = NonlinearityKind::critical;
    SpectralInputs spectral;
    double p = 0.0;
    // [schedule]
    double eps0 = 0.4;
    double ratio = 0.5;
    int steps = 5;
    // [solver] and refinement
    ContinuationConfig continuation;
    // [verify]
    VerifyToggles verify;
    double lipschitz_r = 0.25;
    double nondegeneracy_r0 = 0.0; // 0: four times the largest spacing
    double sandwich_rel_tol = 5e-3;
    // [output]
    std::string out_dir = "out";
    // [sweep]
    std::vector<double> sweep_lambda_over_lambda1;
    std::vector<double> sweep_kappa_fraction;

    std::vector<double> schedule() const;
};

RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::string& path);

struct CliOptions {
    std::string config_path;
    std::optional<std::string> out_dir;
    std::string field_path;
    bool allow_supercritical_kappa = false;
    std::uint64_t seed = 0;
};

int cmd_spectrum(const CliOptions& opt, std::ostream& out, std::ostream& err);
int cmd_solve(const CliOptions& opt, std::ostream& out, std::ostream& err);
int cmd_verify(const CliOptions& opt, std::ostream& out, std::ostream& err);
int cmd_sweep(const CliOptions& opt, std::ostream& out, std::ostream& err);
int cmd_report(const CliOptions& opt, std::ostream& out, std::ostream& err);

// Worker count for sweeps: FBGROUND_THREADS if set and positive, else the hardware concurrency.
unsigned worker_count();

} // namespace fbground

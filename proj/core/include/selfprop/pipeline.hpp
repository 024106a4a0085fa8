#pragma once

#include "selfprop/config.hpp"
#include "selfprop/optimizer.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace selfprop {

// Lazily built artifacts of one configuration. Mesh and basis are cached
// under <output_dir>/cache keyed by the body file hash and the parameters
// they depend on.
class Workspace {
public:
    Workspace(RunConfig cfg, std::ostream& log);

    const RunConfig& config() const { return cfg_; }
    const BodyGeometry& body();
    std::shared_ptr<const MixedSpace> space();
    std::shared_ptr<const OseenOperator> op();
    std::shared_ptr<const PropulsionBasis> basis();
    const TraceNorm& norm();
    const AdmissibleSpace& admissible();

    std::string mesh_key();
    std::string basis_key();
    std::string cache_path(const std::string& name) const;
    std::string out_path(const std::string& name) const;

    StateOptions state_options() const;
    OptimizerOptions optimizer_options() const;
    // Built-in control field scaled by control_amplitude, projected to the kind.
    TraceField control();
    // Deterministic admissible direction i (seeded by the config seed).
    TraceField direction(int i);

private:
    RunConfig cfg_;
    std::ostream& log_;
    std::unique_ptr<BodyGeometry> body_;
    std::string body_hash_;
    std::shared_ptr<const MixedSpace> space_;
    std::shared_ptr<const OseenOperator> op_;
    std::shared_ptr<const PropulsionBasis> basis_;
    std::unique_ptr<TraceNorm> norm_;
    std::unique_ptr<AdmissibleSpace> adm_;
};

const std::vector<std::string>& command_names();

// Runs one command and returns the process exit status: 0 on success,
// 1 on failed verification checks, the error code value otherwise.
int run_command(const std::string& cmd, const RunConfig& cfg, std::ostream& out);

struct VerifyCheck {
    std::string name;
    double value = 0;
    double limit = 0;
    bool pass = false;
};

// Invariant suite on the configured fixture; also written to verify.csv.
std::vector<VerifyCheck> verify_checks(Workspace& w);

// Finite-difference check of the linearized state. Rows hold direction,
// step, error and the reference norm; slope is the log-log fit over steps.
struct FdCheck {
    std::vector<int> direction;
    std::vector<double> step, error, reference;
    std::vector<double> slope;   // per direction
};
FdCheck linearization_fd(Workspace& w, const FlowState& st);

struct GradientCheck {
    std::vector<double> central, adjoint, rel_error;
};
GradientCheck gradient_fd(Workspace& w, const FlowState& st, const AdjointState& a, double h = 1e-3);

} // namespace selfprop

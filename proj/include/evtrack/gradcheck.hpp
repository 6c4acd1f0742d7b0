#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "evtrack/autograd.hpp"

namespace evtrack {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    int probes_per_input = 12;
    // Denominator floor of the relative error, for entries whose true
    // gradient is near zero.
    double abs_floor = 1e-2;
};

struct GradCheckReport {
    std::string name;
    std::uint64_t seed = 0;
    double max_rel_error = 0.0;
    int probes = 0;
    int skipped = 0;  // probes straddling a kink
    bool finite = true;
    bool passed = false;
    std::string worst;  // "input[index]" of the worst probe
};

/// A differentiable function of several tensors; `forward` must be pure.
struct GradCheckProblem {
    std::vector<std::string> input_names;
    std::vector<Tensor> inputs;
    std::function<ag::Var(const std::vector<ag::Var>&)> forward;
};

/// grad_check projects the output on a seeded random direction and compares
/// the reverse-mode gradient of that scalar with central differences at
/// randomly chosen coordinates of every input. Probes whose one-sided
/// differences disagree (a ReLU kink or a bilinear cell edge between x-h and
/// x+h) are skipped and counted.
GradCheckReport grad_check(const GradCheckProblem& problem, std::uint64_t seed, const GradCheckOptions& options = {});

struct GradCheckCase {
    std::string name;
    std::function<GradCheckProblem(std::mt19937_64&)> make;
};

/// Registered op-level cases (conv, depthwise, deformable, pointwise,
/// normalisation, pooling, broadcast ops).
std::vector<GradCheckCase> tensor_gradcheck_cases();

/// run_case builds the problem from `seed` and checks it.
GradCheckReport run_case(const GradCheckCase& c, std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace evtrack

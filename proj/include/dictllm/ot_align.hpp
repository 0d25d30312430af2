#pragma once

#include <vector>

#include "dictllm/rng.hpp"
#include "dictllm/tape.hpp"

namespace dictllm {

struct AlignConfig {
    int num_virtual_tokens = 64;
    int target_dim = 0;          // downstream LM embedding width b
    double epsilon = 0.05;       // entropic regularization
    int max_iters = 100;
    double convergence_tol = 1e-6;

    void validate() const;
};

struct AlignParams {
    Param kernel_weight;  // a x b
    Param kernel_bias;    // 1 x b
    Param reference_points;  // n x b, trainable

    static AlignParams init(int source_dim, const AlignConfig& config, Rng& rng);
    std::vector<Param*> all() { return {&kernel_weight, &kernel_bias, &reference_points}; }
};

// h_r = h_s * W + bias, the linear positive-definite kernel map.
int kernel_embed(Tape& tape, int h_s, AlignParams& params);

struct SinkhornResult {
    int plan = -1;  // n x m tape node, nonnegative, near-uniform marginals
    bool converged = false;
    int iterations = 0;
};

// Entropic OT between the rows of h_r (m x b, weights 1/m) and z (n x b,
// weights 1/n) under squared Euclidean cost. The kernel exp(-C/eps) is
// stabilized by one global min-subtraction, which the diagonal scalings
// absorb exactly. Alternating scaling runs until the worst marginal
// violation drops below tol or max_iters is hit; with fixed_iterations
// the loop never early-stops, so unrolled autodiff sees one fixed graph.
// violations_out, when given, records the violation after each iteration.
SinkhornResult sinkhorn(Tape& tape, int h_r, int z, const AlignConfig& config,
                        bool fixed_iterations = false,
                        std::vector<double>* violations_out = nullptr);

struct AlignResult {
    int virtual_tokens = -1;  // n x b tape node
    bool converged = true;
    int iterations = 0;
};

// kernel_embed -> sinkhorn -> row-renormalized pooling (n * TP) * h_r.
// Each virtual token is a convex combination of h_r rows, so the output
// scale does not depend on n. An empty source (m = 0) returns the
// reference points themselves.
AlignResult align(Tape& tape, int h_source, AlignParams& params,
                  const AlignConfig& config, bool fixed_iterations = false);

// Ablation replacement: mean-pool the source rows and expand to n tokens
// with one learned affine map.
struct LinearAlignParams {
    Param weight;  // a x (n*b)
    Param bias;    // 1 x (n*b)

    static LinearAlignParams init(int source_dim, const AlignConfig& config, Rng& rng);
    std::vector<Param*> all() { return {&weight, &bias}; }
};

int linear_align(Tape& tape, int h_source, LinearAlignParams& params,
                 const AlignConfig& config);

}  // namespace dictllm

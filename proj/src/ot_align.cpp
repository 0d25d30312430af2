#include "dictllm/ot_align.hpp"

#include <cmath>
#include <stdexcept>

namespace dictllm {

void AlignConfig::validate() const {
    if (num_virtual_tokens < 1) throw std::invalid_argument("num_virtual_tokens must be >= 1");
    if (target_dim <= 0) throw std::invalid_argument("target_dim must be positive");
    if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (convergence_tol <= 0.0) throw std::invalid_argument("convergence_tol must be positive");
}

namespace {

Mat normal_init(Eigen::Index rows, Eigen::Index cols, double std, Rng& rng) {
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = std * rng.next_normal();
    return m;
}

}  // namespace

AlignParams AlignParams::init(int source_dim, const AlignConfig& config, Rng& rng) {
    config.validate();
    // Small kernel init keeps initial costs O(1), matching the reference
    // points' 0.1 scale: with unit-scale h_r rows, |z - h_r|^2 would dwarf
    // epsilon and the transport plan would start as a saturated hard
    // assignment with vanishing gradients.
    const double std = 0.1 / std::sqrt(static_cast<double>(source_dim));
    return AlignParams{
        Param("align.kernel_weight", normal_init(source_dim, config.target_dim, std, rng)),
        Param("align.kernel_bias", Mat::Zero(1, config.target_dim)),
        Param("align.reference_points",
              normal_init(config.num_virtual_tokens, config.target_dim, 0.1, rng)),
    };
}

int kernel_embed(Tape& tape, int h_s, AlignParams& params) {
    return tape.add_rowvec(tape.matmul(h_s, tape.leaf(params.kernel_weight)),
                           tape.leaf(params.kernel_bias));
}

SinkhornResult sinkhorn(Tape& tape, int h_r, int z, const AlignConfig& config,
                        bool fixed_iterations, std::vector<double>* violations_out) {
    const Eigen::Index m = tape.value(h_r).rows();
    const Eigen::Index n = tape.value(z).rows();
    if (m < 1 || n < 1) throw std::invalid_argument("sinkhorn: empty point set");

    // C[i][j] = |z_i - h_j|^2 via the expansion |z|^2 + |h|^2 - 2 z.h.
    int sq_z = tape.rowsum(tape.cmul(z, z));        // n x 1
    int sq_h = tape.rowsum(tape.cmul(h_r, h_r));    // m x 1
    int cost = tape.add_colvec(
        tape.add_rowvec(tape.scale(tape.matmul_nt(z, h_r), -2.0), tape.transpose(sq_h)),
        sq_z);
    if (!tape.value(cost).allFinite())
        throw std::runtime_error("sinkhorn: non-finite cost matrix");

    // Stabilize exp(-C/eps) by subtracting each row's min, then each
    // column's. Entropic OT plans are invariant to row/column shifts of
    // the cost (they move into the dual potentials, i.e. the diagonal
    // scalings), and after the shift every row and column of the kernel
    // holds an exact 1, so neither scaling ever divides by zero no matter
    // how wide the cost spread grows during training.
    Mat shift_mat = tape.value(cost);
    for (Eigen::Index i = 0; i < n; ++i) shift_mat.row(i).array() -= shift_mat.row(i).minCoeff();
    for (Eigen::Index j = 0; j < m; ++j) shift_mat.col(j).array() -= shift_mat.col(j).minCoeff();
    shift_mat -= tape.value(cost);  // the pure (constant) shift
    int shifted = tape.add(cost, tape.constant(std::move(shift_mat)));
    int kernel = tape.exp_(tape.scale(shifted, -1.0 / config.epsilon));
    int kernel_t = tape.transpose(kernel);

    const double row_mass = 1.0 / static_cast<double>(n);
    const double col_mass = 1.0 / static_cast<double>(m);
    int row_marginal = tape.constant(Mat::Constant(n, 1, row_mass));
    int col_marginal = tape.constant(Mat::Constant(m, 1, col_mass));

    int u = -1;
    int v = tape.constant(Mat::Constant(m, 1, 1.0));
    SinkhornResult result;
    for (int it = 0; it < config.max_iters; ++it) {
        u = tape.cdiv(row_marginal, tape.matmul(kernel, v));
        v = tape.cdiv(col_marginal, tape.matmul(kernel_t, u));
        result.iterations = it + 1;
        // After the v update column sums are exact; the row-sum residual
        // is the remaining violation.
        Mat row_sums =
            tape.value(u).cwiseProduct(tape.value(kernel) * tape.value(v));
        double violation = (row_sums.array() - row_mass).abs().maxCoeff();
        if (violations_out) violations_out->push_back(violation);
        if (violation < config.convergence_tol) {
            result.converged = true;
            if (!fixed_iterations) break;
        }
    }
    result.plan = tape.cmul(tape.matmul_nt(u, v), kernel);
    return result;
}

AlignResult align(Tape& tape, int h_source, AlignParams& params,
                  const AlignConfig& config, bool fixed_iterations) {
    AlignResult out;
    if (tape.value(h_source).rows() == 0) {
        out.virtual_tokens = tape.leaf(params.reference_points);
        return out;
    }
    int h_r = kernel_embed(tape, h_source, params);
    int z = tape.leaf(params.reference_points);
    SinkhornResult sk = sinkhorn(tape, h_r, z, config, fixed_iterations);
    out.converged = sk.converged;
    out.iterations = sk.iterations;
    // Row-renormalize: rows of n*TP sum to ~1, making each virtual token
    // a convex combination of h_r rows.
    out.virtual_tokens = tape.scale(tape.matmul(sk.plan, h_r),
                                    static_cast<double>(config.num_virtual_tokens));
    return out;
}

LinearAlignParams LinearAlignParams::init(int source_dim, const AlignConfig& config,
                                          Rng& rng) {
    config.validate();
    const double std = 1.0 / std::sqrt(static_cast<double>(source_dim));
    const int out_dim = config.num_virtual_tokens * config.target_dim;
    return LinearAlignParams{
        Param("align.linear_weight", normal_init(source_dim, out_dim, std, rng)),
        Param("align.linear_bias", Mat::Zero(1, out_dim)),
    };
}

int linear_align(Tape& tape, int h_source, LinearAlignParams& params,
                 const AlignConfig& config) {
    const Eigen::Index m = tape.value(h_source).rows();
    int mean = tape.scale(tape.colsum(h_source), 1.0 / static_cast<double>(m));
    int flat = tape.add(tape.matmul(mean, tape.leaf(params.weight)),
                        tape.leaf(params.bias));
    return tape.reshape_rowmajor(flat, config.num_virtual_tokens, config.target_dim);
}

}  // namespace dictllm

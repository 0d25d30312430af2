#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace dictllm {

using Mat = Eigen::MatrixXd;

// A trainable matrix with its gradient accumulator and AdamW state.
struct Param {
    std::string name;
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;

    Param(std::string n, Mat v)
        : name(std::move(n)),
          value(std::move(v)),
          grad(Mat::Zero(value.rows(), value.cols())),
          adam_m(Mat::Zero(value.rows(), value.cols())),
          adam_v(Mat::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(); }
};

// Reverse-mode tape over dense matrices. Nodes are appended in forward
// order, so reverse iteration is a valid topological order. One tape per
// forward pass; leaves write their gradients back into Param::grad.
class Tape {
public:
    int constant(Mat value);
    int leaf(Param& p);

    const Mat& value(int id) const { return nodes_[id].value; }
    Mat& grad(int id) { return nodes_[id].grad; }
    size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 (loss must be 1x1) and runs the tape in
    // reverse. Leaf gradients accumulate into their Params.
    void backward(int loss);

    // --- elementwise / shape ---
    int add(int a, int b);
    int sub(int a, int b);
    int cmul(int a, int b);
    int cdiv(int a, int b);
    int scale(int a, double s);
    int add_rowvec(int a, int row);  // row: 1 x cols, broadcast down rows
    int add_colvec(int a, int col);  // col: rows x 1, broadcast across cols
    int exp_(int a);
    int gelu(int a);
    int transpose(int a);
    int reshape_rowmajor(int a, Eigen::Index rows, Eigen::Index cols);
    int slice_rows(int a, Eigen::Index r0, Eigen::Index n);
    int slice_cols(int a, Eigen::Index c0, Eigen::Index n);
    int concat_rows(const std::vector<int>& parts);
    int concat_cols(const std::vector<int>& parts);
    int rowsum(int a);  // rows x 1
    int colsum(int a);  // 1 x cols

    // --- linear algebra ---
    int matmul(int a, int b);
    int matmul_nt(int a, int b);  // a * b^T

    // --- neural-net blocks ---
    // Rows of W gathered by index (embedding lookup); gradient scatters.
    int gather_rows(int w, std::vector<int> indices);
    // Row softmax of (a + bias); bias carries the additive attention mask.
    int softmax_rows(int a, const Mat& bias);
    int softmax_rows(int a) { return softmax_rows(a, Mat::Zero(0, 0)); }
    // Per-row normalization with learned gain/offset (each 1 x cols).
    int layernorm_rows(int a, int gain, int offset);
    // Mean cross-entropy of row softmax against target ids; returns 1x1.
    int softmax_xent(int logits, std::vector<int> targets);

private:
    using BackFn = std::function<void(Tape&)>;
    struct Node {
        Mat value;
        Mat grad;
        BackFn back;
    };
    std::vector<Node> nodes_;
    int push(Mat value, BackFn back);
};

}  // namespace dictllm

#include "dictllm/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace dictllm {

int Tape::push(Mat value, BackFn back) {
    Node node;
    node.grad = Mat::Zero(value.rows(), value.cols());
    node.value = std::move(value);
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::constant(Mat value) {
    return push(std::move(value), nullptr);
}

int Tape::leaf(Param& p) {
    Param* pp = &p;
    int id = push(p.value, nullptr);
    nodes_[id].back = [id, pp](Tape& t) { pp->grad += t.nodes_[id].grad; };
    return id;
}

void Tape::backward(int loss) {
    if (nodes_[loss].value.size() != 1)
        throw std::logic_error("backward: loss node must be 1x1");
    nodes_[loss].grad(0, 0) = 1.0;
    for (int i = loss; i >= 0; --i) {
        if (nodes_[i].back) nodes_[i].back(*this);
    }
}

int Tape::add(int a, int b) {
    int id = push(nodes_[a].value + nodes_[b].value, nullptr);
    nodes_[id].back = [id, a, b](Tape& t) {
        t.nodes_[a].grad += t.nodes_[id].grad;
        t.nodes_[b].grad += t.nodes_[id].grad;
    };
    return id;
}

int Tape::sub(int a, int b) {
    int id = push(nodes_[a].value - nodes_[b].value, nullptr);
    nodes_[id].back = [id, a, b](Tape& t) {
        t.nodes_[a].grad += t.nodes_[id].grad;
        t.nodes_[b].grad -= t.nodes_[id].grad;
    };
    return id;
}

int Tape::cmul(int a, int b) {
    int id = push(nodes_[a].value.cwiseProduct(nodes_[b].value), nullptr);
    nodes_[id].back = [id, a, b](Tape& t) {
        t.nodes_[a].grad += t.nodes_[id].grad.cwiseProduct(t.nodes_[b].value);
        t.nodes_[b].grad += t.nodes_[id].grad.cwiseProduct(t.nodes_[a].value);
    };
    return id;
}

int Tape::cdiv(int a, int b) {
    int id = push(nodes_[a].value.cwiseQuotient(nodes_[b].value), nullptr);
    nodes_[id].back = [id, a, b](Tape& t) {
        const Mat& g = t.nodes_[id].grad;
        const Mat& bv = t.nodes_[b].value;
        t.nodes_[a].grad += g.cwiseQuotient(bv);
        t.nodes_[b].grad -= g.cwiseProduct(t.nodes_[id].value).cwiseQuotient(bv);
    };
    return id;
}

int Tape::scale(int a, double s) {
    int id = push(nodes_[a].value * s, nullptr);
    nodes_[id].back = [id, a, s](Tape& t) { t.nodes_[a].grad += t.nodes_[id].grad * s; };
    return id;
}

int Tape::add_rowvec(int a, int row) {
    int id = push(nodes_[a].value.rowwise() + nodes_[row].value.row(0), nullptr);
    nodes_[id].back = [id, a, row](Tape& t) {
        t.nodes_[a].grad += t.nodes_[id].grad;
        t.nodes_[row].grad += t.nodes_[id].grad.colwise().sum();
    };
    return id;
}

int Tape::add_colvec(int a, int col) {
    int id = push(nodes_[a].value.colwise() + nodes_[col].value.col(0), nullptr);
    nodes_[id].back = [id, a, col](Tape& t) {
        t.nodes_[a].grad += t.nodes_[id].grad;
        t.nodes_[col].grad += t.nodes_[id].grad.rowwise().sum();
    };
    return id;
}

int Tape::exp_(int a) {
    int id = push(nodes_[a].value.array().exp().matrix(), nullptr);
    nodes_[id].back = [id, a](Tape& t) {
        t.nodes_[a].grad += t.nodes_[id].grad.cwiseProduct(t.nodes_[id].value);
    };
    return id;
}

int Tape::gelu(int a) {
    // Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
    const Mat& x = nodes_[a].value;
    Mat y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double v = x(i);
        y(i) = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    }
    int id = push(std::move(y), nullptr);
    nodes_[id].back = [id, a](Tape& t) {
        const Mat& xv = t.nodes_[a].value;
        const Mat& g = t.nodes_[id].grad;
        Mat& ga = t.nodes_[a].grad;
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (Eigen::Index i = 0; i < xv.size(); ++i) {
            double v = xv(i);
            double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
            double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            ga(i) += g(i) * (cdf + v * pdf);
        }
    };
    return id;
}

int Tape::transpose(int a) {
    int id = push(nodes_[a].value.transpose(), nullptr);
    nodes_[id].back = [id, a](Tape& t) {
        t.nodes_[a].grad += t.nodes_[id].grad.transpose();
    };
    return id;
}

int Tape::reshape_rowmajor(int a, Eigen::Index rows, Eigen::Index cols) {
    const Mat& x = nodes_[a].value;
    if (x.size() != rows * cols) throw std::logic_error("reshape: size mismatch");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor rx = x;
    Mat y = Eigen::Map<const RowMajor>(rx.data(), rows, cols);
    // Read the input shape before push(): it may reallocate nodes_ and
    // invalidate the reference x.
    const Eigen::Index in_rows = x.rows(), in_cols = x.cols();
    int id = push(std::move(y), nullptr);
    nodes_[id].back = [id, a, in_rows, in_cols](Tape& t) {
        RowMajor rg = t.nodes_[id].grad;
        t.nodes_[a].grad += Eigen::Map<const RowMajor>(rg.data(), in_rows, in_cols);
    };
    return id;
}

int Tape::slice_rows(int a, Eigen::Index r0, Eigen::Index n) {
    int id = push(nodes_[a].value.middleRows(r0, n), nullptr);
    nodes_[id].back = [id, a, r0, n](Tape& t) {
        t.nodes_[a].grad.middleRows(r0, n) += t.nodes_[id].grad;
    };
    return id;
}

int Tape::slice_cols(int a, Eigen::Index c0, Eigen::Index n) {
    int id = push(nodes_[a].value.middleCols(c0, n), nullptr);
    nodes_[id].back = [id, a, c0, n](Tape& t) {
        t.nodes_[a].grad.middleCols(c0, n) += t.nodes_[id].grad;
    };
    return id;
}

int Tape::concat_rows(const std::vector<int>& parts) {
    Eigen::Index rows = 0;
    Eigen::Index cols = nodes_[parts.at(0)].value.cols();
    for (int p : parts) rows += nodes_[p].value.rows();
    Mat y(rows, cols);
    Eigen::Index r = 0;
    for (int p : parts) {
        y.middleRows(r, nodes_[p].value.rows()) = nodes_[p].value;
        r += nodes_[p].value.rows();
    }
    int id = push(std::move(y), nullptr);
    std::vector<int> ps = parts;
    nodes_[id].back = [id, ps](Tape& t) {
        Eigen::Index r = 0;
        for (int p : ps) {
            Eigen::Index n = t.nodes_[p].value.rows();
            t.nodes_[p].grad += t.nodes_[id].grad.middleRows(r, n);
            r += n;
        }
    };
    return id;
}

int Tape::concat_cols(const std::vector<int>& parts) {
    Eigen::Index cols = 0;
    Eigen::Index rows = nodes_[parts.at(0)].value.rows();
    for (int p : parts) cols += nodes_[p].value.cols();
    Mat y(rows, cols);
    Eigen::Index c = 0;
    for (int p : parts) {
        y.middleCols(c, nodes_[p].value.cols()) = nodes_[p].value;
        c += nodes_[p].value.cols();
    }
    int id = push(std::move(y), nullptr);
    std::vector<int> ps = parts;
    nodes_[id].back = [id, ps](Tape& t) {
        Eigen::Index c = 0;
        for (int p : ps) {
            Eigen::Index n = t.nodes_[p].value.cols();
            t.nodes_[p].grad += t.nodes_[id].grad.middleCols(c, n);
            c += n;
        }
    };
    return id;
}

int Tape::rowsum(int a) {
    int id = push(nodes_[a].value.rowwise().sum(), nullptr);
    nodes_[id].back = [id, a](Tape& t) {
        t.nodes_[a].grad.colwise() += t.nodes_[id].grad.col(0);
    };
    return id;
}

int Tape::colsum(int a) {
    int id = push(nodes_[a].value.colwise().sum(), nullptr);
    nodes_[id].back = [id, a](Tape& t) {
        t.nodes_[a].grad.rowwise() += t.nodes_[id].grad.row(0);
    };
    return id;
}

int Tape::matmul(int a, int b) {
    int id = push(nodes_[a].value * nodes_[b].value, nullptr);
    nodes_[id].back = [id, a, b](Tape& t) {
        const Mat& g = t.nodes_[id].grad;
        t.nodes_[a].grad += g * t.nodes_[b].value.transpose();
        t.nodes_[b].grad += t.nodes_[a].value.transpose() * g;
    };
    return id;
}

int Tape::matmul_nt(int a, int b) {
    int id = push(nodes_[a].value * nodes_[b].value.transpose(), nullptr);
    nodes_[id].back = [id, a, b](Tape& t) {
        const Mat& g = t.nodes_[id].grad;
        t.nodes_[a].grad += g * t.nodes_[b].value;
        t.nodes_[b].grad += g.transpose() * t.nodes_[a].value;
    };
    return id;
}

int Tape::gather_rows(int w, std::vector<int> indices) {
    const Mat& W = nodes_[w].value;
    Mat y(static_cast<Eigen::Index>(indices.size()), W.cols());
    for (size_t i = 0; i < indices.size(); ++i) {
        int idx = indices[i];
        if (idx < 0 || idx >= W.rows())
            throw std::out_of_range("gather_rows: index " + std::to_string(idx) +
                                    " out of range [0, " + std::to_string(W.rows()) + ")");
        y.row(static_cast<Eigen::Index>(i)) = W.row(idx);
    }
    int id = push(std::move(y), nullptr);
    nodes_[id].back = [id, w, idx = std::move(indices)](Tape& t) {
        for (size_t i = 0; i < idx.size(); ++i)
            t.nodes_[w].grad.row(idx[i]) +=
                t.nodes_[id].grad.row(static_cast<Eigen::Index>(i));
    };
    return id;
}

int Tape::softmax_rows(int a, const Mat& bias) {
    Mat z = nodes_[a].value;
    if (bias.size() > 0) z += bias;
    Mat y(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        double mx = z.row(r).maxCoeff();
        Eigen::ArrayXd e = (z.row(r).array() - mx).exp();
        y.row(r) = (e / e.sum()).matrix();
    }
    int id = push(std::move(y), nullptr);
    nodes_[id].back = [id, a](Tape& t) {
        const Mat& yv = t.nodes_[id].value;
        const Mat& g = t.nodes_[id].grad;
        for (Eigen::Index r = 0; r < yv.rows(); ++r) {
            double dot = g.row(r).dot(yv.row(r));
            t.nodes_[a].grad.row(r) +=
                yv.row(r).cwiseProduct(g.row(r) - Mat::Constant(1, yv.cols(), dot));
        }
    };
    return id;
}

int Tape::layernorm_rows(int a, int gain, int offset) {
    const Mat& x = nodes_[a].value;
    const Eigen::Index d = x.cols();
    constexpr double eps = 1e-5;
    Mat xhat(x.rows(), d);
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mu = x.row(r).mean();
        Eigen::ArrayXd c = x.row(r).array() - mu;
        double var = c.square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (c * inv_std(r)).matrix();
    }
    Mat y = (xhat.array().rowwise() * nodes_[gain].value.row(0).array()).matrix();
    y.rowwise() += nodes_[offset].value.row(0);
    int id = push(std::move(y), nullptr);
    nodes_[id].back = [id, a, gain, offset, xhat = std::move(xhat),
                       inv_std = std::move(inv_std), d](Tape& t) {
        const Mat& g = t.nodes_[id].grad;
        t.nodes_[offset].grad += g.colwise().sum();
        t.nodes_[gain].grad += g.cwiseProduct(xhat).colwise().sum();
        const auto gamma = t.nodes_[gain].value.row(0).array();
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            Eigen::ArrayXd gx = g.row(r).array() * gamma;  // dL/dxhat
            double m1 = gx.mean();
            double m2 = (gx * xhat.row(r).array().transpose()).mean();
            t.nodes_[a].grad.row(r) +=
                (inv_std(r) * (gx - m1 - xhat.row(r).array().transpose() * m2))
                    .matrix()
                    .transpose();
        }
        (void)d;
    };
    return id;
}

int Tape::softmax_xent(int logits, std::vector<int> targets) {
    const Mat& z = nodes_[logits].value;
    if (static_cast<Eigen::Index>(targets.size()) != z.rows())
        throw std::logic_error("softmax_xent: one target per row required");
    Mat probs(z.rows(), z.cols());
    double loss = 0.0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        double mx = z.row(r).maxCoeff();
        Eigen::ArrayXd e = (z.row(r).array() - mx).exp();
        double s = e.sum();
        probs.row(r) = (e / s).matrix();
        loss -= std::log(std::max(probs(r, targets[r]), 1e-300));
    }
    loss /= static_cast<double>(z.rows());
    int id = push(Mat::Constant(1, 1, loss), nullptr);
    nodes_[id].back = [id, logits, probs = std::move(probs),
                       tg = std::move(targets)](Tape& t) {
        double g = t.nodes_[id].grad(0, 0) / static_cast<double>(probs.rows());
        Mat d = probs;
        for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, tg[r]) -= 1.0;
        t.nodes_[logits].grad += g * d;
    };
    return id;
}

}  // namespace dictllm

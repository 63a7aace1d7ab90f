#include "mlc/graph.hpp"

#include "mlc/error.hpp"

#include <cmath>
#include <cstddef>

namespace mlc::diff {

namespace {

void require_rank2(const Tensor& t, const char* op, const char* side) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": " + side + " must be rank-2, got " + t.shape_str());
    }
}

} // namespace

const Tensor& GradMap::at(const std::string& name) const {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw ConfigError("grad_map: no gradient for segment '" + name + "'");
    return it->second;
}

void GradMap::put(const std::string& name, Tensor grad) { grads_[name] = std::move(grad); }

ParamVector GradMap::in_layout(const ParamVector& layout) const {
    ParamVector out;
    for (const auto& seg : layout.segments()) {
        auto it = grads_.find(seg.name);
        if (it == grads_.end()) {
            out.add(seg.name, Tensor::zeros(seg.tensor.shape()));
        } else {
            if (it->second.shape() != seg.tensor.shape()) {
                throw ShapeError("grad_map: gradient for '" + seg.name + "' has shape " +
                                 it->second.shape_str() + ", layout expects " + seg.tensor.shape_str());
            }
            out.add(seg.name, it->second);
        }
    }
    return out;
}

ValueId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<ValueId>(nodes_.size() - 1);
}

const Graph::Node& Graph::node(ValueId id) const { return nodes_[static_cast<std::size_t>(id)]; }

void Graph::check_id(ValueId id, const char* op) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw StateError(std::string(op) + ": node id " + std::to_string(id) + " is not in this graph");
    }
}

const Tensor& Graph::value(ValueId id) const {
    check_id(id, "value");
    return node(id).value;
}

bool Graph::is_barrier(ValueId id) const {
    check_id(id, "is_barrier");
    return node(id).op == Op::StopGradient;
}

ValueId Graph::input(Tensor value) {
    Node n;
    n.op = Op::Input;
    n.value = std::move(value);
    n.requires_grad = false;
    return push(std::move(n));
}

ValueId Graph::param(const std::string& name, const Tensor& value) {
    auto it = param_ids_.find(name);
    if (it != param_ids_.end()) {
        const Node& existing = node(it->second);
        if (existing.value.shape() != value.shape()) {
            throw ShapeError("param: segment '" + name + "' re-bound with shape " + value.shape_str() +
                             ", graph holds " + existing.value.shape_str());
        }
        return it->second;
    }
    Node n;
    n.op = Op::Param;
    n.value = value;
    n.requires_grad = true;
    n.param_name = name;
    ValueId id = push(std::move(n));
    param_ids_.emplace(name, id);
    return id;
}

ValueId Graph::matmul(ValueId a, ValueId b) {
    check_id(a, "matmul");
    check_id(b, "matmul");
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    require_rank2(A, "matmul", "lhs");
    require_rank2(B, "matmul", "rhs");
    if (A.cols() != B.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, lhs " + A.shape_str() + " vs rhs " + B.shape_str());
    }
    const int m = A.rows(), k = A.cols(), n = B.cols();
    Tensor Y({m, n});
    const double* pa = A.data();
    const double* pb = B.data();
    double* py = Y.data();
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            const double av = pa[static_cast<std::size_t>(i) * k + kk];
            const double* brow = pb + static_cast<std::size_t>(kk) * n;
            double* yrow = py + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) yrow[j] += av * brow[j];
        }
    }
    Node nn;
    nn.op = Op::MatMul;
    nn.value = std::move(Y);
    nn.a = a;
    nn.b = b;
    nn.requires_grad = rg(a) || rg(b);
    return push(std::move(nn));
}

ValueId Graph::add_bias(ValueId x, ValueId bias) {
    check_id(x, "add_bias");
    check_id(bias, "add_bias");
    const Tensor& X = node(x).value;
    const Tensor& B = node(bias).value;
    require_rank2(X, "add_bias", "input");
    if (B.rank() != 1 || B.dim(0) != X.cols()) {
        throw ShapeError("add_bias: bias " + B.shape_str() + " does not match input " + X.shape_str());
    }
    Tensor Y = X;
    const int m = X.rows(), n = X.cols();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) Y.at(i, j) += B.at(static_cast<std::size_t>(j));
    }
    Node nn;
    nn.op = Op::AddBias;
    nn.value = std::move(Y);
    nn.a = x;
    nn.b = bias;
    nn.requires_grad = rg(x) || rg(bias);
    return push(std::move(nn));
}

ValueId Graph::add(ValueId a, ValueId b) {
    check_id(a, "add");
    check_id(b, "add");
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    if (!A.same_shape(B)) {
        throw ShapeError("add: shapes disagree, " + A.shape_str() + " vs " + B.shape_str());
    }
    Tensor Y = A;
    for (std::size_t i = 0; i < Y.size(); ++i) Y.at(i) += B.at(i);
    Node nn;
    nn.op = Op::Add;
    nn.value = std::move(Y);
    nn.a = a;
    nn.b = b;
    nn.requires_grad = rg(a) || rg(b);
    return push(std::move(nn));
}

ValueId Graph::sub(ValueId a, ValueId b) {
    check_id(a, "sub");
    check_id(b, "sub");
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    if (!A.same_shape(B)) {
        throw ShapeError("sub: shapes disagree, " + A.shape_str() + " vs " + B.shape_str());
    }
    Tensor Y = A;
    for (std::size_t i = 0; i < Y.size(); ++i) Y.at(i) -= B.at(i);
    Node nn;
    nn.op = Op::Sub;
    nn.value = std::move(Y);
    nn.a = a;
    nn.b = b;
    nn.requires_grad = rg(a) || rg(b);
    return push(std::move(nn));
}

ValueId Graph::mul(ValueId a, ValueId b) {
    check_id(a, "mul");
    check_id(b, "mul");
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    if (!A.same_shape(B)) {
        throw ShapeError("mul: shapes disagree, " + A.shape_str() + " vs " + B.shape_str());
    }
    Tensor Y = A;
    for (std::size_t i = 0; i < Y.size(); ++i) Y.at(i) *= B.at(i);
    Node nn;
    nn.op = Op::Mul;
    nn.value = std::move(Y);
    nn.a = a;
    nn.b = b;
    nn.requires_grad = rg(a) || rg(b);
    return push(std::move(nn));
}

ValueId Graph::scale(ValueId a, double c) {
    check_id(a, "scale");
    Tensor Y = node(a).value;
    for (std::size_t i = 0; i < Y.size(); ++i) Y.at(i) *= c;
    Node nn;
    nn.op = Op::Scale;
    nn.value = std::move(Y);
    nn.a = a;
    nn.c = c;
    nn.requires_grad = rg(a);
    return push(std::move(nn));
}

ValueId Graph::tanh(ValueId a) {
    check_id(a, "tanh");
    Tensor Y = node(a).value;
    for (std::size_t i = 0; i < Y.size(); ++i) Y.at(i) = std::tanh(Y.at(i));
    Node nn;
    nn.op = Op::Tanh;
    nn.value = std::move(Y);
    nn.a = a;
    nn.requires_grad = rg(a);
    return push(std::move(nn));
}

ValueId Graph::log(ValueId a) {
    check_id(a, "log");
    const Tensor& A = node(a).value;
    Tensor Y = A;
    for (std::size_t i = 0; i < Y.size(); ++i) {
        if (!(A.at(i) > 0.0)) {
            throw DivergenceError("log: non-positive input " + std::to_string(A.at(i)) +
                                  " at flat index " + std::to_string(i));
        }
        Y.at(i) = std::log(A.at(i));
    }
    Node nn;
    nn.op = Op::Log;
    nn.value = std::move(Y);
    nn.a = a;
    nn.requires_grad = rg(a);
    return push(std::move(nn));
}

ValueId Graph::softmax_rows(ValueId a) {
    check_id(a, "softmax_rows");
    const Tensor& A = node(a).value;
    require_rank2(A, "softmax_rows", "input");
    Tensor Y = A;
    const int m = A.rows(), n = A.cols();
    for (int i = 0; i < m; ++i) {
        double mx = Y.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, Y.at(i, j));
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            double e = std::exp(Y.at(i, j) - mx);
            Y.at(i, j) = e;
            s += e;
        }
        for (int j = 0; j < n; ++j) Y.at(i, j) /= s;
    }
    Node nn;
    nn.op = Op::SoftmaxRows;
    nn.value = std::move(Y);
    nn.a = a;
    nn.requires_grad = rg(a);
    return push(std::move(nn));
}

ValueId Graph::log_softmax_rows(ValueId a) {
    check_id(a, "log_softmax_rows");
    const Tensor& A = node(a).value;
    require_rank2(A, "log_softmax_rows", "input");
    Tensor Y = A;
    const int m = A.rows(), n = A.cols();
    for (int i = 0; i < m; ++i) {
        double mx = Y.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, Y.at(i, j));
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += std::exp(Y.at(i, j) - mx);
        const double lse = mx + std::log(s);
        for (int j = 0; j < n; ++j) Y.at(i, j) -= lse;
    }
    Node nn;
    nn.op = Op::LogSoftmaxRows;
    nn.value = std::move(Y);
    nn.a = a;
    nn.requires_grad = rg(a);
    return push(std::move(nn));
}

ValueId Graph::embed_rows(ValueId table, std::vector<int> indices) {
    check_id(table, "embed_rows");
    const Tensor& T = node(table).value;
    require_rank2(T, "embed_rows", "table");
    const int rows = T.rows(), width = T.cols();
    Tensor Y({static_cast<int>(indices.size()), width});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || idx >= rows) {
            throw IndexError("embed_rows: index " + std::to_string(idx) + " at position " +
                             std::to_string(i) + " outside table with " + std::to_string(rows) + " rows");
        }
        for (int j = 0; j < width; ++j) {
            Y.at(static_cast<int>(i), j) = T.at(idx, j);
        }
    }
    Node nn;
    nn.op = Op::EmbedRows;
    nn.value = std::move(Y);
    nn.a = table;
    nn.indices = std::move(indices);
    nn.requires_grad = rg(table);
    return push(std::move(nn));
}

ValueId Graph::concat_cols(ValueId a, ValueId b) {
    check_id(a, "concat_cols");
    check_id(b, "concat_cols");
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    require_rank2(A, "concat_cols", "lhs");
    require_rank2(B, "concat_cols", "rhs");
    if (A.rows() != B.rows()) {
        throw ShapeError("concat_cols: row counts disagree, " + A.shape_str() + " vs " + B.shape_str());
    }
    const int m = A.rows(), na = A.cols(), nb = B.cols();
    Tensor Y({m, na + nb});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < na; ++j) Y.at(i, j) = A.at(i, j);
        for (int j = 0; j < nb; ++j) Y.at(i, na + j) = B.at(i, j);
    }
    Node nn;
    nn.op = Op::ConcatCols;
    nn.value = std::move(Y);
    nn.a = a;
    nn.b = b;
    nn.requires_grad = rg(a) || rg(b);
    return push(std::move(nn));
}

ValueId Graph::row_sum(ValueId a) {
    check_id(a, "row_sum");
    const Tensor& A = node(a).value;
    require_rank2(A, "row_sum", "input");
    const int m = A.rows(), n = A.cols();
    Tensor Y({m});
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += A.at(i, j);
        Y.at(static_cast<std::size_t>(i)) = s;
    }
    Node nn;
    nn.op = Op::RowSum;
    nn.value = std::move(Y);
    nn.a = a;
    nn.requires_grad = rg(a);
    return push(std::move(nn));
}

ValueId Graph::sum_all(ValueId a) {
    check_id(a, "sum_all");
    const Tensor& A = node(a).value;
    double s = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) s += A.at(i);
    Node nn;
    nn.op = Op::SumAll;
    nn.value = Tensor::scalar(s);
    nn.a = a;
    nn.requires_grad = rg(a);
    return push(std::move(nn));
}

ValueId Graph::mean_all(ValueId a) {
    check_id(a, "mean_all");
    const Tensor& A = node(a).value;
    if (A.size() == 0) throw ShapeError("mean_all: empty input " + A.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) s += A.at(i);
    Node nn;
    nn.op = Op::MeanAll;
    nn.value = Tensor::scalar(s / static_cast<double>(A.size()));
    nn.a = a;
    nn.requires_grad = rg(a);
    return push(std::move(nn));
}

ValueId Graph::dot(ValueId a, ValueId b) {
    check_id(a, "dot");
    check_id(b, "dot");
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    if (A.rank() != 1 || B.rank() != 1 || A.dim(0) != B.dim(0)) {
        throw ShapeError("dot: expects equal-length rank-1 inputs, got " + A.shape_str() + " vs " + B.shape_str());
    }
    double s = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) s += A.at(i) * B.at(i);
    Node nn;
    nn.op = Op::Dot;
    nn.value = Tensor::scalar(s);
    nn.a = a;
    nn.b = b;
    nn.requires_grad = rg(a) || rg(b);
    return push(std::move(nn));
}

ValueId Graph::stop_gradient(ValueId a) {
    check_id(a, "stop_gradient");
    Node nn;
    nn.op = Op::StopGradient;
    nn.value = node(a).value;
    nn.a = a;
    nn.requires_grad = false;
    ValueId id = push(std::move(nn));
    barriers_.push_back(id);
    return id;
}

GradMap Graph::backward(ValueId output) const { return backward(output, Tensor::scalar(1.0)); }

GradMap Graph::backward(ValueId output, const Tensor& seed) const {
    check_id(output, "backward");
    const Tensor& out_value = node(output).value;
    if (!seed.same_shape(out_value)) {
        throw ShapeError("backward: seed shape " + seed.shape_str() + " does not match output " +
                         out_value.shape_str());
    }

    // Adjoint buffers, allocated lazily; a single reverse sweep over the tape
    // (already topologically ordered) visits every node at most once.
    std::vector<Tensor> adj(nodes_.size());
    std::vector<bool> has_adj(nodes_.size(), false);
    auto touch = [&](ValueId id) -> Tensor& {
        auto u = static_cast<std::size_t>(id);
        if (!has_adj[u]) {
            adj[u] = Tensor::zeros(nodes_[u].value.shape());
            has_adj[u] = true;
        }
        return adj[u];
    };

    touch(output) = seed;

    for (ValueId id = output; id >= 0; --id) {
        const auto u = static_cast<std::size_t>(id);
        const Node& n = nodes_[u];
        if (!has_adj[u] || !n.requires_grad) continue;
        const Tensor& g = adj[u];
        switch (n.op) {
        case Op::Input:
        case Op::Param:
        case Op::StopGradient:
            break;
        case Op::MatMul: {
            const Tensor& A = node(n.a).value;
            const Tensor& B = node(n.b).value;
            const int m = A.rows(), k = A.cols(), ncols = B.cols();
            if (rg(n.a)) {
                Tensor& da = touch(n.a);
                const double* pg = g.data();
                const double* pb = B.data();
                double* pda = da.data();
                for (int i = 0; i < m; ++i) {
                    for (int kk = 0; kk < k; ++kk) {
                        double s = 0.0;
                        const double* grow = pg + static_cast<std::size_t>(i) * ncols;
                        const double* brow = pb + static_cast<std::size_t>(kk) * ncols;
                        for (int j = 0; j < ncols; ++j) s += grow[j] * brow[j];
                        pda[static_cast<std::size_t>(i) * k + kk] += s;
                    }
                }
            }
            if (rg(n.b)) {
                Tensor& db = touch(n.b);
                const double* pg = g.data();
                const double* pa = A.data();
                double* pdb = db.data();
                for (int i = 0; i < m; ++i) {
                    for (int kk = 0; kk < k; ++kk) {
                        const double av = pa[static_cast<std::size_t>(i) * k + kk];
                        const double* grow = pg + static_cast<std::size_t>(i) * ncols;
                        double* dbrow = pdb + static_cast<std::size_t>(kk) * ncols;
                        for (int j = 0; j < ncols; ++j) dbrow[j] += av * grow[j];
                    }
                }
            }
            break;
        }
        case Op::AddBias: {
            if (rg(n.a)) {
                Tensor& dx = touch(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) dx.at(i) += g.at(i);
            }
            if (rg(n.b)) {
                Tensor& db = touch(n.b);
                const int m = g.rows(), ncols = g.cols();
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < ncols; ++j) db.at(static_cast<std::size_t>(j)) += g.at(i, j);
                }
            }
            break;
        }
        case Op::Add: {
            if (rg(n.a)) {
                Tensor& da = touch(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) da.at(i) += g.at(i);
            }
            if (rg(n.b)) {
                Tensor& db = touch(n.b);
                for (std::size_t i = 0; i < g.size(); ++i) db.at(i) += g.at(i);
            }
            break;
        }
        case Op::Sub: {
            if (rg(n.a)) {
                Tensor& da = touch(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) da.at(i) += g.at(i);
            }
            if (rg(n.b)) {
                Tensor& db = touch(n.b);
                for (std::size_t i = 0; i < g.size(); ++i) db.at(i) -= g.at(i);
            }
            break;
        }
        case Op::Mul: {
            const Tensor& A = node(n.a).value;
            const Tensor& B = node(n.b).value;
            if (rg(n.a)) {
                Tensor& da = touch(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) da.at(i) += g.at(i) * B.at(i);
            }
            if (rg(n.b)) {
                Tensor& db = touch(n.b);
                for (std::size_t i = 0; i < g.size(); ++i) db.at(i) += g.at(i) * A.at(i);
            }
            break;
        }
        case Op::Scale: {
            Tensor& da = touch(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) da.at(i) += n.c * g.at(i);
            break;
        }
        case Op::Tanh: {
            Tensor& da = touch(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double y = n.value.at(i);
                da.at(i) += g.at(i) * (1.0 - y * y);
            }
            break;
        }
        case Op::Log: {
            const Tensor& A = node(n.a).value;
            Tensor& da = touch(n.a);
            for (std::size_t i = 0; i < g.size(); ++i) da.at(i) += g.at(i) / A.at(i);
            break;
        }
        case Op::SoftmaxRows: {
            Tensor& da = touch(n.a);
            const int m = n.value.rows(), ncols = n.value.cols();
            for (int i = 0; i < m; ++i) {
                double inner = 0.0;
                for (int j = 0; j < ncols; ++j) inner += g.at(i, j) * n.value.at(i, j);
                for (int j = 0; j < ncols; ++j) {
                    da.at(i, j) += n.value.at(i, j) * (g.at(i, j) - inner);
                }
            }
            break;
        }
        case Op::LogSoftmaxRows: {
            Tensor& da = touch(n.a);
            const int m = n.value.rows(), ncols = n.value.cols();
            for (int i = 0; i < m; ++i) {
                double gsum = 0.0;
                for (int j = 0; j < ncols; ++j) gsum += g.at(i, j);
                for (int j = 0; j < ncols; ++j) {
                    da.at(i, j) += g.at(i, j) - std::exp(n.value.at(i, j)) * gsum;
                }
            }
            break;
        }
        case Op::EmbedRows: {
            Tensor& dt = touch(n.a);
            const int width = dt.cols();
            for (std::size_t i = 0; i < n.indices.size(); ++i) {
                const int idx = n.indices[i];
                for (int j = 0; j < width; ++j) {
                    dt.at(idx, j) += g.at(static_cast<int>(i), j);
                }
            }
            break;
        }
        case Op::ConcatCols: {
            const int m = n.value.rows();
            const int na = node(n.a).value.cols();
            const int nb = node(n.b).value.cols();
            if (rg(n.a)) {
                Tensor& da = touch(n.a);
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < na; ++j) da.at(i, j) += g.at(i, j);
                }
            }
            if (rg(n.b)) {
                Tensor& db = touch(n.b);
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < nb; ++j) db.at(i, j) += g.at(i, na + j);
                }
            }
            break;
        }
        case Op::RowSum: {
            Tensor& da = touch(n.a);
            const int m = da.rows(), ncols = da.cols();
            for (int i = 0; i < m; ++i) {
                const double gi = g.at(static_cast<std::size_t>(i));
                for (int j = 0; j < ncols; ++j) da.at(i, j) += gi;
            }
            break;
        }
        case Op::SumAll: {
            Tensor& da = touch(n.a);
            const double gv = g.item();
            for (std::size_t i = 0; i < da.size(); ++i) da.at(i) += gv;
            break;
        }
        case Op::MeanAll: {
            Tensor& da = touch(n.a);
            const double gv = g.item() / static_cast<double>(da.size());
            for (std::size_t i = 0; i < da.size(); ++i) da.at(i) += gv;
            break;
        }
        case Op::Dot: {
            const Tensor& A = node(n.a).value;
            const Tensor& B = node(n.b).value;
            const double gv = g.item();
            if (rg(n.a)) {
                Tensor& da = touch(n.a);
                for (std::size_t i = 0; i < da.size(); ++i) da.at(i) += gv * B.at(i);
            }
            if (rg(n.b)) {
                Tensor& db = touch(n.b);
                for (std::size_t i = 0; i < db.size(); ++i) db.at(i) += gv * A.at(i);
            }
            break;
        }
        }
    }

    GradMap out;
    for (const auto& [name, id] : param_ids_) {
        const auto u = static_cast<std::size_t>(id);
        if (has_adj[u]) {
            out.put(name, adj[u]);
        } else {
            out.put(name, Tensor::zeros(nodes_[u].value.shape()));
        }
    }
    return out;
}

} // namespace mlc::diff

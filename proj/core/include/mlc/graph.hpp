#pragma once

#include "mlc/param_vector.hpp"
#include "mlc/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace mlc::diff {

using ValueId = int;

// Gradients keyed by parameter segment name, as produced by Graph::backward.
class GradMap {
public:
    bool has(const std::string& name) const { return grads_.count(name) != 0; }
    const Tensor& at(const std::string& name) const;
    void put(const std::string& name, Tensor grad);

    // Collect gradients into the layout of `layout`; segments the graph never
    // saw (or that sit behind a barrier) come back as zeros.
    ParamVector in_layout(const ParamVector& layout) const;

    const std::map<std::string, Tensor>& entries() const { return grads_; }

private:
    std::map<std::string, Tensor> grads_;
};

// Record of one forward computation, built define-by-run and discarded after
// use. Nodes are appended in topological order; backward() is a single reverse
// sweep. Gradient flow stops exactly at barrier nodes (stop_gradient).
class Graph {
public:
    // Leaves. `input` values are constants; `param` values are tracked and
    // keyed by name. Calling `param` twice with the same name returns the
    // original node so several forward passes can share one parameter set.
    ValueId input(Tensor value);
    ValueId param(const std::string& name, const Tensor& value);

    // Primitives.
    ValueId matmul(ValueId a, ValueId b);
    ValueId add_bias(ValueId x, ValueId bias);      // [m,n] + [n], broadcast over rows
    ValueId add(ValueId a, ValueId b);
    ValueId sub(ValueId a, ValueId b);
    ValueId mul(ValueId a, ValueId b);              // elementwise
    ValueId scale(ValueId a, double c);
    ValueId tanh(ValueId a);
    ValueId log(ValueId a);                         // domain: strictly positive input
    ValueId softmax_rows(ValueId a);
    ValueId log_softmax_rows(ValueId a);
    ValueId embed_rows(ValueId table, std::vector<int> indices);
    ValueId concat_cols(ValueId a, ValueId b);
    ValueId row_sum(ValueId a);                     // [m,n] -> [m]
    ValueId sum_all(ValueId a);                     // -> scalar
    ValueId mean_all(ValueId a);                    // -> scalar
    ValueId dot(ValueId a, ValueId b);              // rank-1 x rank-1 -> scalar

    // Forward value unchanged; the new node joins the barrier set and never
    // passes gradient upstream. The source node keeps its own gradient path.
    ValueId stop_gradient(ValueId a);

    const Tensor& value(ValueId id) const;
    std::size_t node_count() const { return nodes_.size(); }
    bool is_barrier(ValueId id) const;
    const std::vector<ValueId>& barriers() const { return barriers_; }

    // d(seed . output)/d(theta) for every parameter leaf in the graph.
    GradMap backward(ValueId output, const Tensor& seed) const;
    // Scalar output, implicit seed of 1.
    GradMap backward(ValueId output) const;

private:
    enum class Op {
        Input,
        Param,
        MatMul,
        AddBias,
        Add,
        Sub,
        Mul,
        Scale,
        Tanh,
        Log,
        SoftmaxRows,
        LogSoftmaxRows,
        EmbedRows,
        ConcatCols,
        RowSum,
        SumAll,
        MeanAll,
        Dot,
        StopGradient,
    };

    struct Node {
        Op op;
        Tensor value;
        int a = -1;
        int b = -1;
        double c = 0.0;           // Scale factor
        std::vector<int> indices; // EmbedRows
        bool requires_grad = false;
        std::string param_name;   // Param leaves only
    };

    ValueId push(Node n);
    const Node& node(ValueId id) const;
    void check_id(ValueId id, const char* op) const;
    bool rg(ValueId id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    std::vector<Node> nodes_;
    std::vector<ValueId> barriers_;
    std::map<std::string, ValueId> param_ids_;
};

} // namespace mlc::diff

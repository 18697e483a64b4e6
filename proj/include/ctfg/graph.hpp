#pragma once

#include <deque>
#include <map>
#include <string>
#include <vector>

#include "ctfg/array.hpp"

namespace ctfg {

using ArrayMap = std::map<std::string, Array>;

// Named trainable tensors. std::map keeps iteration order deterministic,
// which fixes checkpoint layout and gradient collection order.
class ParamStore {
public:
    void add(const std::string& name, Array value);
    bool has(const std::string& name) const;
    Array& get(const std::string& name);
    const Array& get(const std::string& name) const;
    const std::map<std::string, Array>& all() const { return p_; }
    std::map<std::string, Array>& all() { return p_; }
    std::size_t count() const { return p_.size(); }
    std::size_t total_numel() const;

private:
    std::map<std::string, Array> p_;
};

enum class Op : unsigned char {
    input,
    param,
    constant,
    add,
    sub,
    mul,
    matmul,
    transpose,
    reshape,
    concat,
    softmax_rows,
    layer_norm_rows,
    gelu,
    exp_op,
    log_op,
    sum_all,
    sum_axis0,
    masked_fill,
    less,
    greater,
};

const char* op_name(Op op);

struct NodeRef {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Tape-style reverse-mode graph over Arrays. Construction is eager: a node's
// value is computed the moment it is built, so control flow during graph
// construction may read values (sampling, comparisons). forward() rebinds
// named inputs and re-evaluates the whole tape in build order; backward()
// seeds one node and accumulates gradients for every parameter in the bound
// store (zeros for parameters the seed does not depend on).
//
// Broadcast for add/sub/mul: equal shapes, one-element right operand, or a
// 1xN row right operand against an MxN left operand. Other layouts are
// rewritten at construction into that form. less/greater emit 0/1 masks,
// are recomputed on every forward, and propagate no gradient.
//
// A Graph is not thread-safe; distinct Graph instances over a read-only
// ParamStore may be built and differentiated concurrently.
class Graph {
public:
    explicit Graph(const ParamStore* params = nullptr);

    NodeRef input(const std::string& name, Array value);
    NodeRef constant(Array value);
    NodeRef param(const std::string& name);

    NodeRef add(NodeRef a, NodeRef b);
    NodeRef sub(NodeRef a, NodeRef b);
    NodeRef mul(NodeRef a, NodeRef b);
    NodeRef matmul(NodeRef a, NodeRef b);
    NodeRef transpose(NodeRef a);
    NodeRef reshape(NodeRef a, Shape target);
    NodeRef concat(const std::vector<NodeRef>& parts, int axis);
    NodeRef softmax_rows(NodeRef a);
    NodeRef layer_norm_rows(NodeRef a, double eps = 1e-5);
    NodeRef gelu(NodeRef a);
    NodeRef exp(NodeRef a);
    NodeRef log(NodeRef a);
    NodeRef sum_all(NodeRef a);
    NodeRef mean_all(NodeRef a);
    NodeRef sum_axis(NodeRef a, int axis);
    NodeRef mean_axis(NodeRef a, int axis);
    NodeRef masked_fill(NodeRef x, NodeRef mask, double fill);
    NodeRef less(NodeRef a, NodeRef b);
    NodeRef greater(NodeRef a, NodeRef b);

    // Sugar composed from catalog ops only.
    NodeRef scale(NodeRef a, double s);
    NodeRef add_scalar(NodeRef a, double s);
    NodeRef square(NodeRef a);
    NodeRef minimum(NodeRef a, NodeRef b);
    NodeRef clamp(NodeRef a, double lo, double hi);

    void mark_output(const std::string& name, NodeRef n);

    const Array& value(NodeRef n) const;
    // Gradient of the last backward() seed w.r.t. node n; zeros-shaped only
    // after a backward touched it.
    const Array& grad(NodeRef n) const;
    bool has_grad(NodeRef n) const;
    std::size_t size() const { return nodes_.size(); }
    const ParamStore* params() const { return params_; }
    std::string node_label(int idx) const;

    friend ArrayMap forward(Graph& g, const ArrayMap& inputs);
    friend ArrayMap backward(Graph& g, NodeRef seed, const Array& upstream);

private:
    struct Node {
        Op op;
        std::vector<int> in;
        Array value;
        Array grad;
        bool grad_set = false;
        std::string name;  // inputs and params only
        double fill = 0.0;
        double eps = 1e-5;
        Shape target;  // reshape
    };

    const ParamStore* params_;
    // deque: growing the tape never invalidates references handed out by
    // value()/grad(), so eager construction can read earlier values safely.
    std::deque<Node> nodes_;
    std::map<std::string, int> input_nodes_;
    std::map<std::string, int> param_nodes_;
    std::map<std::string, int> outputs_;

    int push(Node n);
    void eval(int i);
    void backward_node(int i);
    void accumulate(int idx, const Array& g);
    Array& grad_buf(int idx);
    const Node& node(NodeRef r) const;
    [[noreturn]] void node_fail(int idx, const std::string& msg) const;
};

// Rebinds the named input arrays (shapes must match the originals),
// re-evaluates every node, and returns the marked outputs.
ArrayMap forward(Graph& g, const ArrayMap& inputs);

// Seeds d(seed)=upstream and walks the tape in reverse. Returns one gradient
// per parameter in the graph's store, zero-filled for unused parameters.
ArrayMap backward(Graph& g, NodeRef seed, const Array& upstream);

}  // namespace ctfg

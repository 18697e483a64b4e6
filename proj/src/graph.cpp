#include "ctfg/graph.hpp"

#include <cstring>

#include "ctfg/kernels.hpp"

namespace ctfg {

namespace {

// Broadcast classification for binary elementwise ops. By construction the
// right operand is the broadcast side.
enum class Bcast { same, scalar_rhs, row_rhs };

bool is_row(const Array& a) { return a.rank() == 1 || (a.rank() == 2 && a.shape()[0] == 1); }

Bcast classify(const Array& a, const Array& b) {
    if (a.shape() == b.shape()) return Bcast::same;
    if (b.numel() == 1) return Bcast::scalar_rhs;
    if (is_row(b) && a.rank() == 2 && a.cols() == b.cols()) return Bcast::row_rhs;
    fail("incompatible elementwise shapes " + shape_str(a.shape()) + " and " +
         shape_str(b.shape()));
}

}  // namespace

void ParamStore::add(const std::string& name, Array value) {
    if (p_.count(name)) fail("parameter '" + name + "' already exists");
    p_.emplace(name, std::move(value));
}

bool ParamStore::has(const std::string& name) const { return p_.count(name) != 0; }

Array& ParamStore::get(const std::string& name) {
    auto it = p_.find(name);
    if (it == p_.end()) fail("unknown parameter '" + name + "'");
    return it->second;
}

const Array& ParamStore::get(const std::string& name) const {
    auto it = p_.find(name);
    if (it == p_.end()) fail("unknown parameter '" + name + "'");
    return it->second;
}

std::size_t ParamStore::total_numel() const {
    std::size_t n = 0;
    for (const auto& [k, v] : p_) n += v.numel();
    return n;
}

const char* op_name(Op op) {
    switch (op) {
        case Op::input: return "input";
        case Op::param: return "param";
        case Op::constant: return "constant";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::matmul: return "matmul";
        case Op::transpose: return "transpose";
        case Op::reshape: return "reshape";
        case Op::concat: return "concat";
        case Op::softmax_rows: return "softmax_rows";
        case Op::layer_norm_rows: return "layer_norm_rows";
        case Op::gelu: return "gelu";
        case Op::exp_op: return "exp";
        case Op::log_op: return "log";
        case Op::sum_all: return "sum_all";
        case Op::sum_axis0: return "sum_axis0";
        case Op::masked_fill: return "masked_fill";
        case Op::less: return "less";
        case Op::greater: return "greater";
    }
    return "?";
}

Graph::Graph(const ParamStore* params) : params_(params) {}

std::string Graph::node_label(int idx) const {
    const Node& n = nodes_[idx];
    if (!n.name.empty()) return n.name;
    return std::string(op_name(n.op)) + "#" + std::to_string(idx);
}

void Graph::node_fail(int idx, const std::string& msg) const {
    fail("node " + node_label(idx) + ": " + msg);
}

const Graph::Node& Graph::node(NodeRef r) const {
    if (!r.valid() || r.idx >= static_cast<int>(nodes_.size())) fail("invalid node reference");
    return nodes_[r.idx];
}

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    int idx = static_cast<int>(nodes_.size()) - 1;
    eval(idx);
    if (checked_mode() && !nodes_[idx].value.all_finite())
        node_fail(idx, "non-finite value");
    return idx;
}

NodeRef Graph::input(const std::string& name, Array value) {
    if (name.empty()) fail("input name must be non-empty");
    if (input_nodes_.count(name)) fail("duplicate input '" + name + "'");
    Node n;
    n.op = Op::input;
    n.name = name;
    n.value = std::move(value);
    int idx = push(std::move(n));
    input_nodes_[name] = idx;
    return NodeRef{idx};
}

NodeRef Graph::constant(Array value) {
    Node n;
    n.op = Op::constant;
    n.value = std::move(value);
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::param(const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return NodeRef{it->second};
    if (!params_) fail("graph has no parameter store");
    Node n;
    n.op = Op::param;
    n.name = name;
    n.value = params_->get(name);
    int idx = push(std::move(n));
    param_nodes_[name] = idx;
    return NodeRef{idx};
}

namespace {
// True when the left operand is the broadcast side and the two must be
// reordered (or rewritten, for sub) so the right operand broadcasts.
bool lhs_broadcasts(const Array& va, const Array& vb) {
    if (va.shape() == vb.shape()) return false;
    if (va.numel() == 1 && vb.numel() > 1) return true;
    return is_row(va) && vb.rank() == 2 && vb.shape()[0] > 1;
}
}  // namespace

NodeRef Graph::add(NodeRef a, NodeRef b) {
    const Array& va = node(a).value;
    const Array& vb = node(b).value;
    if (lhs_broadcasts(va, vb)) return add(b, a);
    Node n;
    n.op = Op::add;
    n.in = {a.idx, b.idx};
    classify(va, vb);
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::sub(NodeRef a, NodeRef b) {
    const Array& va = node(a).value;
    const Array& vb = node(b).value;
    if (lhs_broadcasts(va, vb)) return scale(sub(b, a), -1.0);
    Node n;
    n.op = Op::sub;
    n.in = {a.idx, b.idx};
    classify(va, vb);
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::mul(NodeRef a, NodeRef b) {
    const Array& va = node(a).value;
    const Array& vb = node(b).value;
    if (lhs_broadcasts(va, vb)) return mul(b, a);
    Node n;
    n.op = Op::mul;
    n.in = {a.idx, b.idx};
    classify(va, vb);
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::matmul(NodeRef a, NodeRef b) {
    const Array& va = node(a).value;
    const Array& vb = node(b).value;
    if (va.rank() != 2 || vb.rank() != 2)
        fail("matmul needs rank-2 operands, got " + shape_str(va.shape()) + " and " +
             shape_str(vb.shape()));
    if (va.shape()[1] != vb.shape()[0])
        fail("matmul inner dimensions differ: " + shape_str(va.shape()) + " vs " +
             shape_str(vb.shape()));
    Node n;
    n.op = Op::matmul;
    n.in = {a.idx, b.idx};
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::transpose(NodeRef a) {
    if (node(a).value.rank() != 2) fail("transpose needs a rank-2 operand");
    Node n;
    n.op = Op::transpose;
    n.in = {a.idx};
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::reshape(NodeRef a, Shape target) {
    if (shape_numel(target) != node(a).value.numel())
        fail("reshape to " + shape_str(target) + " changes element count");
    Node n;
    n.op = Op::reshape;
    n.in = {a.idx};
    n.target = std::move(target);
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::concat(const std::vector<NodeRef>& parts, int axis) {
    if (parts.empty()) fail("concat of zero parts");
    if (axis != 0 && axis != 1) fail("concat axis must be 0 or 1");
    for (const NodeRef& p : parts)
        if (node(p).value.rank() != 2) fail("concat needs rank-2 parts");
    const Array& first = node(parts[0]).value;
    for (const NodeRef& p : parts) {
        const Array& v = node(p).value;
        if (axis == 0 && v.shape()[1] != first.shape()[1])
            fail("concat axis 0 needs equal column counts");
        if (axis == 1 && v.shape()[0] != first.shape()[0])
            fail("concat axis 1 needs equal row counts");
    }
    Node n;
    n.op = Op::concat;
    for (const NodeRef& p : parts) n.in.push_back(p.idx);
    n.fill = axis;  // reuse the slot; 0.0 or 1.0
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::softmax_rows(NodeRef a) {
    if (node(a).value.rank() > 2) fail("softmax_rows needs rank <= 2");
    Node n;
    n.op = Op::softmax_rows;
    n.in = {a.idx};
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::layer_norm_rows(NodeRef a, double eps) {
    if (node(a).value.rank() > 2) fail("layer_norm_rows needs rank <= 2");
    Node n;
    n.op = Op::layer_norm_rows;
    n.in = {a.idx};
    n.eps = eps;
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::gelu(NodeRef a) {
    Node n;
    n.op = Op::gelu;
    n.in = {a.idx};
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::exp(NodeRef a) {
    Node n;
    n.op = Op::exp_op;
    n.in = {a.idx};
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::log(NodeRef a) {
    Node n;
    n.op = Op::log_op;
    n.in = {a.idx};
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::sum_all(NodeRef a) {
    Node n;
    n.op = Op::sum_all;
    n.in = {a.idx};
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::mean_all(NodeRef a) {
    double inv = 1.0 / static_cast<double>(node(a).value.numel());
    return scale(sum_all(a), inv);
}

NodeRef Graph::sum_axis(NodeRef a, int axis) {
    if (node(a).value.rank() != 2) fail("sum_axis needs a rank-2 operand");
    if (axis == 0) {
        Node n;
        n.op = Op::sum_axis0;
        n.in = {a.idx};
        return NodeRef{push(std::move(n))};
    }
    if (axis == 1) return transpose(sum_axis(transpose(a), 0));
    fail("sum_axis axis must be 0 or 1");
}

NodeRef Graph::mean_axis(NodeRef a, int axis) {
    const Array& v = node(a).value;
    double inv = 1.0 / static_cast<double>(axis == 0 ? v.shape()[0] : v.shape()[1]);
    return scale(sum_axis(a, axis), inv);
}

NodeRef Graph::masked_fill(NodeRef x, NodeRef mask, double fill) {
    if (!(node(x).value.shape() == node(mask).value.shape()))
        fail("masked_fill mask shape " + shape_str(node(mask).value.shape()) +
             " differs from operand " + shape_str(node(x).value.shape()));
    Node n;
    n.op = Op::masked_fill;
    n.in = {x.idx, mask.idx};
    n.fill = fill;
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::less(NodeRef a, NodeRef b) {
    if (!(node(a).value.shape() == node(b).value.shape()))
        fail("less needs equal shapes");
    Node n;
    n.op = Op::less;
    n.in = {a.idx, b.idx};
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::greater(NodeRef a, NodeRef b) {
    if (!(node(a).value.shape() == node(b).value.shape()))
        fail("greater needs equal shapes");
    Node n;
    n.op = Op::greater;
    n.in = {a.idx, b.idx};
    return NodeRef{push(std::move(n))};
}

NodeRef Graph::scale(NodeRef a, double s) { return mul(a, constant(Array::scalar(s))); }

NodeRef Graph::add_scalar(NodeRef a, double s) { return add(a, constant(Array::scalar(s))); }

NodeRef Graph::square(NodeRef a) { return mul(a, a); }

// min(a,b) = b + (a-b) * 1[a<b]; gradient routes to the smaller side.
NodeRef Graph::minimum(NodeRef a, NodeRef b) {
    NodeRef m = less(a, b);
    return add(b, mul(sub(a, b), m));
}

// Values are pinned to [lo, hi] via masked_fill; gradient is identity inside
// the range and exactly zero outside.
NodeRef Graph::clamp(NodeRef a, double lo, double hi) {
    Shape s = node(a).value.shape();  // copied: pushing nodes may reallocate
    NodeRef lo_c = constant(Array::full(s, lo));
    NodeRef hi_c = constant(Array::full(s, hi));
    NodeRef low = masked_fill(a, less(a, lo_c), lo);
    return masked_fill(low, greater(low, hi_c), hi);
}

void Graph::mark_output(const std::string& name, NodeRef n) {
    node(n);
    outputs_[name] = n.idx;
}

const Array& Graph::value(NodeRef n) const { return node(n).value; }

const Array& Graph::grad(NodeRef n) const {
    const Node& nd = node(n);
    if (!nd.grad_set) fail("node " + node_label(n.idx) + " has no gradient");
    return nd.grad;
}

bool Graph::has_grad(NodeRef n) const { return node(n).grad_set; }

void Graph::eval(int i) {
    Node& n = nodes_[i];
    using namespace kernels;
    auto& V = nodes_;
    switch (n.op) {
        case Op::input:
        case Op::constant:
            return;
        case Op::param:
            n.value = params_->get(n.name);
            return;
        case Op::add:
        case Op::sub:
        case Op::mul: {
            const Array& a = V[n.in[0]].value;
            const Array& b = V[n.in[1]].value;
            EwOp op = n.op == Op::add ? EwOp::add : n.op == Op::sub ? EwOp::sub : EwOp::mul;
            if (n.value.numel() != a.numel()) n.value = Array(a.shape());
            switch (classify(a, b)) {
                case Bcast::same:
                    ew(op, a.numel(), a.data(), b.data(), n.value.data());
                    break;
                case Bcast::scalar_rhs:
                    ew_scalar(op, a.numel(), a.data(), b.at(0), n.value.data());
                    break;
                case Bcast::row_rhs:
                    ew_row(op, a.rows(), a.cols(), a.data(), b.data(), n.value.data());
                    break;
            }
            return;
        }
        case Op::matmul: {
            const Array& a = V[n.in[0]].value;
            const Array& b = V[n.in[1]].value;
            std::size_t m = a.shape()[0], k = a.shape()[1], nn = b.shape()[1];
            if (n.value.numel() != m * nn) n.value = Array(Shape{m, nn});
            matmul_nn(a.data(), b.data(), n.value.data(), m, k, nn, false);
            return;
        }
        case Op::transpose: {
            const Array& a = V[n.in[0]].value;
            std::size_t m = a.shape()[0], c = a.shape()[1];
            if (n.value.numel() != a.numel() || n.value.rank() != 2 ||
                n.value.shape()[0] != c)
                n.value = Array(Shape{c, m});
            kernels::transpose(m, c, a.data(), n.value.data());
            return;
        }
        case Op::reshape: {
            const Array& a = V[n.in[0]].value;
            std::vector<double> d(a.data(), a.data() + a.numel());
            n.value = Array(n.target, std::move(d));
            return;
        }
        case Op::concat: {
            int axis = static_cast<int>(n.fill);
            if (axis == 0) {
                std::size_t rows = 0, cols = V[n.in[0]].value.shape()[1];
                for (int p : n.in) rows += V[p].value.shape()[0];
                if (n.value.numel() != rows * cols) n.value = Array(Shape{rows, cols});
                std::size_t r = 0;
                for (int p : n.in) {
                    const Array& v = V[p].value;
                    std::memcpy(n.value.data() + r * cols, v.data(),
                                v.numel() * sizeof(double));
                    r += v.shape()[0];
                }
            } else {
                std::size_t rows = V[n.in[0]].value.shape()[0], cols = 0;
                for (int p : n.in) cols += V[p].value.shape()[1];
                if (n.value.numel() != rows * cols) n.value = Array(Shape{rows, cols});
                std::size_t c0 = 0;
                for (int p : n.in) {
                    const Array& v = V[p].value;
                    std::size_t pc = v.shape()[1];
                    for (std::size_t r = 0; r < rows; ++r)
                        std::memcpy(n.value.data() + r * cols + c0, v.data() + r * pc,
                                    pc * sizeof(double));
                    c0 += pc;
                }
            }
            return;
        }
        case Op::softmax_rows: {
            const Array& a = V[n.in[0]].value;
            if (n.value.numel() != a.numel()) n.value = Array(a.shape());
            kernels::softmax_rows(a.rows(), a.cols(), a.data(), n.value.data());
            return;
        }
        case Op::layer_norm_rows: {
            const Array& a = V[n.in[0]].value;
            if (n.value.numel() != a.numel()) n.value = Array(a.shape());
            kernels::layer_norm_rows(a.rows(), a.cols(), n.eps, a.data(), n.value.data());
            return;
        }
        case Op::gelu:
        case Op::exp_op:
        case Op::log_op: {
            const Array& a = V[n.in[0]].value;
            UnOp op = n.op == Op::gelu ? UnOp::gelu
                      : n.op == Op::exp_op ? UnOp::exp
                                           : UnOp::log;
            if (n.value.numel() != a.numel()) n.value = Array(a.shape());
            unary(op, a.numel(), a.data(), n.value.data());
            return;
        }
        case Op::sum_all: {
            const Array& a = V[n.in[0]].value;
            n.value = Array::scalar(kernels::sum_all(a.numel(), a.data()));
            return;
        }
        case Op::sum_axis0: {
            const Array& a = V[n.in[0]].value;
            std::size_t cols = a.cols();
            if (n.value.numel() != cols) n.value = Array(Shape{1, cols});
            kernels::sum_axis0(a.rows(), cols, a.data(), n.value.data(), false);
            return;
        }
        case Op::masked_fill: {
            const Array& a = V[n.in[0]].value;
            const Array& m = V[n.in[1]].value;
            if (n.value.numel() != a.numel()) n.value = Array(a.shape());
            kernels::masked_fill(a.numel(), a.data(), m.data(), n.fill, n.value.data());
            return;
        }
        case Op::less:
        case Op::greater: {
            const Array& a = V[n.in[0]].value;
            const Array& b = V[n.in[1]].value;
            if (n.value.numel() != a.numel()) n.value = Array(a.shape());
            compare(a.numel(), a.data(), b.data(), n.op == Op::greater, n.value.data());
            return;
        }
    }
}

Array& Graph::grad_buf(int idx) {
    Node& n = nodes_[idx];
    if (!n.grad_set) {
        n.grad = Array::zeros_like(n.value);
        n.grad_set = true;
    }
    return n.grad;
}

// Accumulate g into input idx's gradient, reducing over broadcast axes when
// the target is a scalar or row operand.
void Graph::accumulate(int idx, const Array& g) {
    Node& n = nodes_[idx];
    Array& buf = grad_buf(idx);
    const Array& v = n.value;
    if (v.shape() == g.shape() || (v.numel() == g.numel() && v.numel() <= 1)) {
        kernels::acc(g.numel(), g.data(), buf.data());
    } else if (v.numel() == 1) {
        buf.at(0) += kernels::sum_all(g.numel(), g.data());
    } else if (is_row(v) && g.rank() == 2 && g.cols() == v.cols()) {
        kernels::sum_axis0(g.rows(), g.cols(), g.data(), buf.data(), true);
    } else if (v.numel() == g.numel()) {
        // reshape-style flat accumulate
        kernels::acc(g.numel(), g.data(), buf.data());
    } else {
        node_fail(idx, "gradient shape " + shape_str(g.shape()) +
                           " incompatible with value " + shape_str(v.shape()));
    }
}

void Graph::backward_node(int i) {
    Node& n = nodes_[i];
    const Array& gy = n.grad;
    using namespace kernels;
    auto& V = nodes_;
    switch (n.op) {
        case Op::input:
        case Op::constant:
        case Op::param:
        case Op::less:
        case Op::greater:
            return;
        case Op::add: {
            accumulate(n.in[0], gy);
            accumulate(n.in[1], gy);
            return;
        }
        case Op::sub: {
            accumulate(n.in[0], gy);
            Array neg(gy.shape());
            ew_scalar(EwOp::mul, gy.numel(), gy.data(), -1.0, neg.data());
            accumulate(n.in[1], neg);
            return;
        }
        case Op::mul: {
            const Array& a = V[n.in[0]].value;
            const Array& b = V[n.in[1]].value;
            Array ta(gy.shape());
            switch (classify(a, b)) {
                case Bcast::same:
                    ew(EwOp::mul, gy.numel(), gy.data(), b.data(), ta.data());
                    break;
                case Bcast::scalar_rhs:
                    ew_scalar(EwOp::mul, gy.numel(), gy.data(), b.at(0), ta.data());
                    break;
                case Bcast::row_rhs:
                    ew_row(EwOp::mul, gy.rows(), gy.cols(), gy.data(), b.data(), ta.data());
                    break;
            }
            accumulate(n.in[0], ta);
            Array tb(gy.shape());
            ew(EwOp::mul, gy.numel(), gy.data(), a.data(), tb.data());
            accumulate(n.in[1], tb);
            return;
        }
        case Op::matmul: {
            const Array& a = V[n.in[0]].value;
            const Array& b = V[n.in[1]].value;
            std::size_t m = a.shape()[0], k = a.shape()[1], nn = b.shape()[1];
            matmul_nt(gy.data(), b.data(), grad_buf(n.in[0]).data(), m, nn, k, true);
            matmul_tn(a.data(), gy.data(), grad_buf(n.in[1]).data(), k, m, nn, true);
            return;
        }
        case Op::transpose: {
            const Array& a = V[n.in[0]].value;
            Array t(a.shape());
            kernels::transpose(gy.shape()[0], gy.shape()[1], gy.data(), t.data());
            accumulate(n.in[0], t);
            return;
        }
        case Op::reshape: {
            accumulate(n.in[0], gy);
            return;
        }
        case Op::concat: {
            int axis = static_cast<int>(n.fill);
            if (axis == 0) {
                std::size_t cols = n.value.shape()[1], r = 0;
                for (int p : n.in) {
                    const Array& v = V[p].value;
                    Array slice(v.shape());
                    std::memcpy(slice.data(), gy.data() + r * cols,
                                v.numel() * sizeof(double));
                    accumulate(p, slice);
                    r += v.shape()[0];
                }
            } else {
                std::size_t rows = n.value.shape()[0], cols = n.value.shape()[1], c0 = 0;
                for (int p : n.in) {
                    const Array& v = V[p].value;
                    std::size_t pc = v.shape()[1];
                    Array slice(v.shape());
                    for (std::size_t r = 0; r < rows; ++r)
                        std::memcpy(slice.data() + r * pc, gy.data() + r * cols + c0,
                                    pc * sizeof(double));
                    accumulate(p, slice);
                    c0 += pc;
                }
            }
            return;
        }
        case Op::softmax_rows: {
            softmax_rows_bwd(n.value.rows(), n.value.cols(), n.value.data(), gy.data(),
                             grad_buf(n.in[0]).data());
            return;
        }
        case Op::layer_norm_rows: {
            const Array& a = V[n.in[0]].value;
            layer_norm_rows_bwd(a.rows(), a.cols(), n.eps, a.data(), gy.data(),
                                grad_buf(n.in[0]).data());
            return;
        }
        case Op::gelu: {
            const Array& a = V[n.in[0]].value;
            Array d(a.shape());
            unary(UnOp::gelu_grad, a.numel(), a.data(), d.data());
            Array t(a.shape());
            ew(EwOp::mul, a.numel(), gy.data(), d.data(), t.data());
            accumulate(n.in[0], t);
            return;
        }
        case Op::exp_op: {
            Array t(n.value.shape());
            ew(EwOp::mul, n.value.numel(), gy.data(), n.value.data(), t.data());
            accumulate(n.in[0], t);
            return;
        }
        case Op::log_op: {
            const Array& a = V[n.in[0]].value;
            Array r(a.shape());
            unary(UnOp::recip, a.numel(), a.data(), r.data());
            Array t(a.shape());
            ew(EwOp::mul, a.numel(), gy.data(), r.data(), t.data());
            accumulate(n.in[0], t);
            return;
        }
        case Op::sum_all: {
            Array& buf = grad_buf(n.in[0]);
            ew_scalar(EwOp::add, buf.numel(), buf.data(), gy.at(0), buf.data());
            return;
        }
        case Op::sum_axis0: {
            const Array& a = V[n.in[0]].value;
            Array& buf = grad_buf(n.in[0]);
            ew_row(EwOp::add, a.rows(), a.cols(), buf.data(), gy.data(), buf.data());
            return;
        }
        case Op::masked_fill: {
            const Array& m = V[n.in[1]].value;
            masked_fill_bwd(gy.numel(), m.data(), gy.data(), grad_buf(n.in[0]).data());
            return;
        }
    }
}

ArrayMap forward(Graph& g, const ArrayMap& inputs) {
    for (const auto& [name, arr] : inputs) {
        auto it = g.input_nodes_.find(name);
        if (it == g.input_nodes_.end()) fail("forward: unknown input '" + name + "'");
        Graph::Node& n = g.nodes_[it->second];
        if (!(n.value.shape() == arr.shape()))
            fail("forward: input '" + name + "' shape " + shape_str(arr.shape()) +
                 " differs from bound shape " + shape_str(n.value.shape()));
        n.value = arr;
    }
    for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
        g.eval(static_cast<int>(i));
        if (checked_mode() && !g.nodes_[i].value.all_finite())
            g.node_fail(static_cast<int>(i), "non-finite value");
    }
    ArrayMap out;
    for (const auto& [name, idx] : g.outputs_) out[name] = g.nodes_[idx].value;
    return out;
}

ArrayMap backward(Graph& g, NodeRef seed, const Array& upstream) {
    const Graph::Node& sn = g.node(seed);
    if (!(sn.value.shape() == upstream.shape()))
        fail("backward: upstream shape " + shape_str(upstream.shape()) +
             " differs from seed value shape " + shape_str(sn.value.shape()));
    for (auto& n : g.nodes_) {
        n.grad_set = false;
        n.grad = Array();
    }
    g.nodes_[seed.idx].grad = upstream;
    g.nodes_[seed.idx].grad_set = true;
    for (int i = seed.idx; i >= 0; --i) {
        if (!g.nodes_[i].grad_set) continue;
        g.backward_node(i);
        if (checked_mode() && !g.nodes_[i].grad.all_finite())
            g.node_fail(i, "non-finite gradient");
    }
    ArrayMap grads;
    if (g.params_) {
        for (const auto& [name, value] : g.params_->all()) {
            auto it = g.param_nodes_.find(name);
            if (it != g.param_nodes_.end() && g.nodes_[it->second].grad_set)
                grads[name] = g.nodes_[it->second].grad;
            else
                grads[name] = Array::zeros_like(value);
        }
    }
    return grads;
}

}  // namespace ctfg

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "led/array.hpp"

namespace led {

using VarId = std::int32_t;

// Reverse-mode autodiff tape. Operations append nodes in evaluation order
// (inputs always precede consumers), so the backward sweep is a single
// reverse pass that visits each node exactly once. Gradient accumulation
// order is fixed by construction, making backward deterministic.
class Tape {
public:
    // Leaf holding a constant or an input; participates in backward so
    // input gradients can be read off afterwards.
    VarId input(Array value) { return push(std::move(value), nullptr); }

    VarId push(Array value, std::function<void(Tape&)> backward) {
        nodes_.push_back(Node{std::move(value), Array{}, std::move(backward)});
        return static_cast<VarId>(nodes_.size() - 1);
    }

    const Array& val(VarId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Array& grad(VarId id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    const Array& grad(VarId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    std::size_t node_count() const { return nodes_.size(); }

    // Records that node `id` carries the value of parameter `name`, so a
    // ParameterStore can harvest its gradient after backward.
    void bind_param(VarId id, const std::string& name) { bindings_.emplace_back(id, name); }
    const std::vector<std::pair<VarId, std::string>>& param_bindings() const { return bindings_; }

    // Seeds d(loss)/d(loss) = 1 and runs the reverse sweep. `loss` must be
    // scalar.
    void backward(VarId loss);

    void clear() {
        nodes_.clear();
        bindings_.clear();
    }

private:
    struct Node {
        Array value;
        Array grad;
        std::function<void(Tape&)> backward;  // null for leaves
    };

    std::vector<Node> nodes_;
    std::vector<std::pair<VarId, std::string>> bindings_;
};

// ---------------------------------------------------------------------------
// Primitive operations. Forward values are computed eagerly; each op appends
// a closure that accumulates into its parents' gradients.
// ---------------------------------------------------------------------------

VarId add(Tape& t, VarId a, VarId b);        // same shape
VarId sub(Tape& t, VarId a, VarId b);        // same shape
VarId mul(Tape& t, VarId a, VarId b);        // elementwise, same shape
VarId div_elem(Tape& t, VarId a, VarId b);   // elementwise, same shape
VarId scale(Tape& t, VarId a, double c);     // constant multiple
VarId neg(Tape& t, VarId a);

VarId matmul(Tape& t, VarId a, VarId b);     // [m x k] * [k x n]
VarId transpose(Tape& t, VarId a);           // 2-d

// W [out x in], x [in], optional bias [out] -> [out]
VarId affine(Tape& t, VarId w, VarId x, VarId b);
VarId affine(Tape& t, VarId w, VarId x);

// M [r x n] + v [n] broadcast over rows.
VarId add_rowvec(Tape& t, VarId m, VarId v);
// M scaled by a scalar variable (shape {1}).
VarId mul_scalar(Tape& t, VarId m, VarId s);

VarId sigmoid(Tape& t, VarId a);
VarId tanh_op(Tape& t, VarId a);
VarId relu(Tape& t, VarId a);
VarId exp_op(Tape& t, VarId a);
VarId log_op(Tape& t, VarId a);              // elementwise natural log

// Max-subtracted softmax. 1-d input normalizes the whole vector; 2-d input
// normalizes each row (axis = last).
VarId softmax(Tape& t, VarId a);

VarId sum(Tape& t, VarId a);                 // -> scalar
VarId frob_norm(Tape& t, VarId a);           // sqrt(sum of squares) -> scalar

VarId reshape(Tape& t, VarId a, std::vector<int> shape);
VarId concat1d(Tape& t, const std::vector<VarId>& parts);
VarId slice1d(Tape& t, VarId a, int i0, int i1);
VarId row(Tape& t, VarId m, int r);                       // [r x n] -> [n]
VarId col_slice(Tape& t, VarId m, int c0, int c1);        // [r x n] -> [r x (c1-c0)]
VarId stack_rows(Tape& t, const std::vector<VarId>& rows);

// Same-length cross-correlation along the leading (time) axis with zero
// padding of (k-1)/2 per side. x [T x Cin], w [k x Cin x Cout], b [Cout].
VarId conv1d(Tape& t, VarId x, VarId w, VarId b);

struct GruParams {
    VarId wz, uz, bz;  // update gate
    VarId wr, ur, br;  // reset gate
    VarId wh, uh, bh;  // candidate
};

// Standard GRU update built from primitives:
//   z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br),
//   hc = tanh(Wh x + Uh (r*h) + bh), h' = (1-z)*h + z*hc.
VarId gru_cell(Tape& t, VarId x, VarId h_prev, const GruParams& p);

}  // namespace led

#pragma once

#include <functional>
#include <vector>

#include "glen/tensor.hpp"

namespace glen {

// Reverse-mode tape over Tensors. The forward pass appends nodes in
// topological order; backward() walks them in reverse. Leaves point at
// external tensors (parameters) and are never copied; their gradients are
// read back through grad(). Nodes never reached from the root keep an empty
// gradient and their backward step is skipped.
class Tape {
public:
    using Id = int;

    // -- inputs ------------------------------------------------------------
    Id leaf(const Tensor* external);
    Id constant(Tensor value);  // participates in forward only

    // -- structure ---------------------------------------------------------
    Id rows(Id matrix, std::vector<int> row_ids);  // gather; grad scatter-adds
    Id row(Id matrix, int r);                      // 1 x c slice
    Id concat_rows(const std::vector<Id>& parts);  // stack 1 x c rows

    // -- arithmetic --------------------------------------------------------
    Id add(Id a, Id b);                 // same shape
    Id add_rowvec(Id a, Id v);          // v is 1 x cols, broadcast over rows
    Id add_const(Id a, const Tensor& c);
    Id scale(Id a, double k);
    Id matmul(Id a, Id b);
    Id matmul_nt(Id a, Id b);           // a * b^T

    // -- nonlinearities ----------------------------------------------------
    Id rmsnorm(Id x, Id gain, double eps);
    Id gelu(Id x);
    Id softmax_rows(Id x);

    // -- reductions / scalars ----------------------------------------------
    Id cross_entropy(Id logits, int row, int target);  // -log softmax(logits[row])[target]
    Id dot(Id a, Id b);                                // 1 x c rows -> scalar
    Id stack_scalars(const std::vector<Id>& scalars);  // k scalars -> 1 x k
    Id sum(const std::vector<Id>& scalars);
    Id s_add(Id a, Id b);
    Id s_mul(Id a, Id b);
    Id s_div(Id a, Id b);
    Id s_sqrt(Id a);
    Id s_affine(Id a, double k, double c);  // k * a + c

    // -- access ------------------------------------------------------------
    const Tensor& val(Id id) const;
    double scalar(Id id) const;
    void backward(Id root);  // root must be 1 x 1
    const Tensor& grad(Id id) const;  // empty tensor if untouched
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        const Tensor* external = nullptr;
        Tensor grad;
        std::function<void()> back;  // null for inputs
    };

    std::vector<Node> nodes_;

    Id push(Tensor value, std::function<void()> back);
    Tensor& grad_slot(Id id);  // allocates zeros on first touch
    static const Tensor& empty_tensor();
};

}  // namespace glen

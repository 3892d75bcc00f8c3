#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace rhnmt {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major matrix of 64-bit floats. The gradient buffer lives next to
// the data, starts empty and is allocated on first use; backward() accumulates
// into it, reset is explicit via zero_grad().
class Tensor {
public:
    std::vector<std::size_t> shape;  // {rows, cols}
    std::vector<double> data;
    std::vector<double> grad;  // empty means "all zero, never touched"
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0, bool req_grad = false);

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape[0]; }
    std::size_t cols() const { return shape[1]; }

    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    void ensure_grad();
    void zero_grad();
    bool all_finite() const;
    std::string shape_str() const;
};

TensorPtr tensor(std::size_t rows, std::size_t cols, double fill = 0.0, bool req_grad = false);
TensorPtr tensor(std::size_t rows, std::size_t cols, std::vector<double> values, bool req_grad = false);
TensorPtr row_vector(std::vector<double> values, bool req_grad = false);

// Reverse-mode tape for one forward pass. Ops record onto the innermost live
// scope of the current thread; with no scope active only values are computed.
// Scopes and the tensors they record are confined to a single thread.
class GraphScope {
public:
    GraphScope();
    ~GraphScope();
    GraphScope(const GraphScope&) = delete;
    GraphScope& operator=(const GraphScope&) = delete;

    static GraphScope* current();
    static void record(TensorPtr out, std::vector<TensorPtr> parents, std::function<void()> fn);

    std::size_t node_count() const { return nodes_.size(); }

private:
    friend void backward(const TensorPtr&);
    struct Node {
        TensorPtr out;
        std::vector<TensorPtr> parents;
        std::function<void()> run;
    };
    std::vector<Node> nodes_;
    GraphScope* prev_ = nullptr;
};

// Accumulates d(loss)/dp into p->grad for every requires_grad ancestor of the
// scalar loss. Repeated calls without zeroing keep accumulating.
void backward(const TensorPtr& loss);

// Elementwise, same shape.
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
// Scalar broadcast.
TensorPtr scale(const TensorPtr& a, double k);
TensorPtr tanh(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);

// [m x k] . [k x n] -> [m x n]
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);

// x [r x c] + b [1 x c], broadcast over rows.
TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& b);

// Horizontal concatenation; all parts share the row count.
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);

// Row lookup: out[k] = table[ids[k]]. Backward scatter-adds into the table.
TensorPtr embedding_rows(const TensorPtr& table, const std::vector<int>& ids);

// Sum along axis 1: [r x c] -> [r x 1].
TensorPtr row_sum(const TensorPtr& x);

// out[i][j] = x[i][j] * s[i][0].
TensorPtr colwise_scale(const TensorPtr& x, const TensorPtr& s);

// Column j as [r x 1].
TensorPtr col(const TensorPtr& x, std::size_t j);

// Softmax over each row restricted to mask==1 positions; masked positions get
// exactly 0. mask is row-major r*c, not differentiated. A fully masked row is
// a contract violation.
TensorPtr masked_softmax(const TensorPtr& scores, const std::vector<int>& mask);

// Sum over unmasked rows of -log softmax(logits[i])[targets[i]] -> [1 x 1].
// Max-subtraction keeps the log-sum-exp finite for any finite logits.
TensorPtr softmax_cross_entropy(const TensorPtr& logits, const std::vector<int>& targets,
                                const std::vector<int>& mask);

// Sum of all entries -> [1 x 1].
TensorPtr sum_all(const TensorPtr& x);

// out row b = steps[step_index[b]] row b. All steps share the same shape.
TensorPtr gather_steps(const std::vector<TensorPtr>& steps, const std::vector<std::size_t>& step_index);

}  // namespace rhnmt

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rhnmt/rng.hpp"
#include "rhnmt/tensor.hpp"

namespace rhnmt {

// One recurrent highway layer: per time step the state passes through `depth`
// stacked highway micro-layers. The input projections W_* act only at the
// first micro-layer; each micro-layer l owns its recurrent matrices R_*[l]
// and biases b_*[l]. With coupled_carry the carry gate is 1 - t and the C
// family is absent.
struct RhnCellParams {
    std::size_t input_dim = 0;   // m
    std::size_t hidden_dim = 0;  // n
    std::size_t depth = 1;       // L
    bool coupled_carry = false;

    TensorPtr W_H, W_T, W_C;                 // m x n (W_C null when coupled)
    std::vector<TensorPtr> R_H, R_T, R_C;    // depth of n x n
    std::vector<TensorPtr> b_H, b_T, b_C;    // depth of 1 x n

    // Matrices uniform in [-0.08, 0.08]; biases zero except the carry side,
    // which starts near identity (b_C = +1, or b_T = -1 when coupled).
    static RhnCellParams create(std::size_t input_dim, std::size_t hidden_dim, std::size_t depth,
                                bool coupled_carry, Rng& rng);

    std::size_t parameter_count() const;
    void named_params(const std::string& prefix,
                      std::vector<std::pair<std::string, TensorPtr>>& out) const;
};

// One time step: s_0 = s_prev, then for l = 1..L
//   h_l = tanh(x W_H [l=1] + s_{l-1} R_H[l] + b_H[l])
//   t_l = sigmoid(x W_T [l=1] + s_{l-1} R_T[l] + b_T[l])
//   c_l = sigmoid(x W_C [l=1] + s_{l-1} R_C[l] + b_C[l])   (1 - t_l when coupled)
//   s_l = h_l * t_l + s_{l-1} * c_l
// Returns s_L.
TensorPtr rhn_step(const RhnCellParams& params, const TensorPtr& x, const TensorPtr& s_prev);

// Unrolls rhn_step over the time axis; states[t] is the state after xs[t].
std::vector<TensorPtr> rhn_unroll(const RhnCellParams& params, const std::vector<TensorPtr>& xs,
                                  const TensorPtr& s0);

// Spatially stacked RHN cells: the output state of cell k feeds cell k+1
// within the same time step. `interlayer` (when set) transforms activations
// between cells, e.g. dropout during training.
struct StackedCell {
    std::vector<RhnCellParams> cells;

    static StackedCell create(std::size_t input_dim, std::size_t hidden_dim, std::size_t layers,
                              std::size_t depth, bool coupled_carry, Rng& rng);
    static StackedCell stack(std::vector<RhnCellParams> cells);

    std::size_t layers() const { return cells.size(); }
    std::size_t hidden_dim() const { return cells.back().hidden_dim; }

    std::vector<TensorPtr> zero_states(std::size_t batch) const;

    // Advances every cell one step in place; returns the top cell's state.
    TensorPtr step(const TensorPtr& x, std::vector<TensorPtr>& states,
                   const std::function<TensorPtr(const TensorPtr&)>& interlayer = nullptr) const;

    // All states per cell per time step: result[layer][t].
    std::vector<std::vector<TensorPtr>> unroll(
        const std::vector<TensorPtr>& xs, std::vector<TensorPtr> states,
        const std::function<TensorPtr(const TensorPtr&)>& interlayer = nullptr) const;

    std::size_t parameter_count() const;
    void named_params(const std::string& prefix,
                      std::vector<std::pair<std::string, TensorPtr>>& out) const;
};

}  // namespace rhnmt

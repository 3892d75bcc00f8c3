#include "rhnmt/rhn_cell.hpp"

#include "rhnmt/errors.hpp"

namespace rhnmt {

namespace {

constexpr double kInitRange = 0.08;

TensorPtr uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    auto t = tensor(rows, cols, 0.0, true);
    for (auto& v : t->data) v = rng.uniform(-kInitRange, kInitRange);
    return t;
}

TensorPtr bias_vector(std::size_t cols, double fill) {
    return tensor(1, cols, fill, true);
}

}  // namespace

RhnCellParams RhnCellParams::create(std::size_t input_dim, std::size_t hidden_dim,
                                    std::size_t depth, bool coupled_carry, Rng& rng) {
    if (input_dim == 0 || hidden_dim == 0 || depth == 0) {
        throw ConfigError("rhn cell: dimensions must be positive (m=" + std::to_string(input_dim) +
                          ", n=" + std::to_string(hidden_dim) + ", L=" + std::to_string(depth) +
                          ")");
    }
    RhnCellParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    p.depth = depth;
    p.coupled_carry = coupled_carry;
    p.W_H = uniform_matrix(input_dim, hidden_dim, rng);
    p.W_T = uniform_matrix(input_dim, hidden_dim, rng);
    if (!coupled_carry) p.W_C = uniform_matrix(input_dim, hidden_dim, rng);
    for (std::size_t l = 0; l < depth; ++l) {
        p.R_H.push_back(uniform_matrix(hidden_dim, hidden_dim, rng));
        p.R_T.push_back(uniform_matrix(hidden_dim, hidden_dim, rng));
        p.b_H.push_back(bias_vector(hidden_dim, 0.0));
        p.b_T.push_back(bias_vector(hidden_dim, coupled_carry ? -1.0 : 0.0));
        if (!coupled_carry) {
            p.R_C.push_back(uniform_matrix(hidden_dim, hidden_dim, rng));
            p.b_C.push_back(bias_vector(hidden_dim, 1.0));
        }
    }
    return p;
}

std::size_t RhnCellParams::parameter_count() const {
    std::size_t total = 0;
    std::vector<std::pair<std::string, TensorPtr>> params;
    named_params("", params);
    for (const auto& [name, t] : params) total += t->size();
    return total;
}

void RhnCellParams::named_params(const std::string& prefix,
                                 std::vector<std::pair<std::string, TensorPtr>>& out) const {
    out.emplace_back(prefix + "W_H", W_H);
    out.emplace_back(prefix + "W_T", W_T);
    if (W_C) out.emplace_back(prefix + "W_C", W_C);
    for (std::size_t l = 0; l < depth; ++l) {
        std::string suffix = "." + std::to_string(l + 1);
        out.emplace_back(prefix + "R_H" + suffix, R_H[l]);
        out.emplace_back(prefix + "R_T" + suffix, R_T[l]);
        if (!coupled_carry) out.emplace_back(prefix + "R_C" + suffix, R_C[l]);
        out.emplace_back(prefix + "b_H" + suffix, b_H[l]);
        out.emplace_back(prefix + "b_T" + suffix, b_T[l]);
        if (!coupled_carry) out.emplace_back(prefix + "b_C" + suffix, b_C[l]);
    }
}

TensorPtr rhn_step(const RhnCellParams& params, const TensorPtr& x, const TensorPtr& s_prev) {
    if (x->cols() != params.input_dim) {
        throw ShapeError("rhn_step: input " + x->shape_str() + " vs input_dim " +
                         std::to_string(params.input_dim));
    }
    if (s_prev->cols() != params.hidden_dim) {
        throw ShapeError("rhn_step: state " + s_prev->shape_str() + " vs hidden_dim " +
                         std::to_string(params.hidden_dim));
    }
    if (x->rows() != s_prev->rows()) {
        throw ShapeError("rhn_step: batch mismatch " + x->shape_str() + " vs " +
                         s_prev->shape_str());
    }
    const std::size_t batch = x->rows();
    TensorPtr s = s_prev;
    for (std::size_t l = 0; l < params.depth; ++l) {
        TensorPtr pre_h = matmul(s, params.R_H[l]);
        TensorPtr pre_t = matmul(s, params.R_T[l]);
        if (l == 0) {
            pre_h = add(pre_h, matmul(x, params.W_H));
            pre_t = add(pre_t, matmul(x, params.W_T));
        }
        TensorPtr h = tanh(add_rowvec(pre_h, params.b_H[l]));
        TensorPtr t = sigmoid(add_rowvec(pre_t, params.b_T[l]));
        TensorPtr c;
        if (params.coupled_carry) {
            c = sub(tensor(batch, params.hidden_dim, 1.0), t);
        } else {
            TensorPtr pre_c = matmul(s, params.R_C[l]);
            if (l == 0) pre_c = add(pre_c, matmul(x, params.W_C));
            c = sigmoid(add_rowvec(pre_c, params.b_C[l]));
        }
        s = add(mul(h, t), mul(s, c));
    }
    return s;
}

std::vector<TensorPtr> rhn_unroll(const RhnCellParams& params, const std::vector<TensorPtr>& xs,
                                  const TensorPtr& s0) {
    if (xs.empty()) throw ContractError("rhn_unroll: empty sequence");
    std::vector<TensorPtr> states;
    states.reserve(xs.size());
    TensorPtr s = s0;
    for (const auto& x : xs) {
        s = rhn_step(params, x, s);
        states.push_back(s);
    }
    return states;
}

StackedCell StackedCell::create(std::size_t input_dim, std::size_t hidden_dim, std::size_t layers,
                                std::size_t depth, bool coupled_carry, Rng& rng) {
    if (layers == 0) throw ConfigError("stacked cell: layers must be positive");
    std::vector<RhnCellParams> cells;
    cells.reserve(layers);
    for (std::size_t k = 0; k < layers; ++k) {
        cells.push_back(RhnCellParams::create(k == 0 ? input_dim : hidden_dim, hidden_dim, depth,
                                              coupled_carry, rng));
    }
    return stack(std::move(cells));
}

StackedCell StackedCell::stack(std::vector<RhnCellParams> cells) {
    if (cells.empty()) throw ConfigError("stacked cell: no cells");
    for (std::size_t k = 1; k < cells.size(); ++k) {
        if (cells[k].input_dim != cells[k - 1].hidden_dim) {
            throw ConfigError("stacked cell: cell " + std::to_string(k) + " expects input " +
                              std::to_string(cells[k].input_dim) + " but cell " +
                              std::to_string(k - 1) + " emits " +
                              std::to_string(cells[k - 1].hidden_dim));
        }
    }
    StackedCell sc;
    sc.cells = std::move(cells);
    return sc;
}

std::vector<TensorPtr> StackedCell::zero_states(std::size_t batch) const {
    std::vector<TensorPtr> states;
    states.reserve(cells.size());
    for (const auto& c : cells) states.push_back(tensor(batch, c.hidden_dim));
    return states;
}

TensorPtr StackedCell::step(const TensorPtr& x, std::vector<TensorPtr>& states,
                            const std::function<TensorPtr(const TensorPtr&)>& interlayer) const {
    if (states.size() != cells.size()) {
        throw ContractError("stacked cell: " + std::to_string(states.size()) + " states for " +
                            std::to_string(cells.size()) + " cells");
    }
    TensorPtr input = x;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        states[k] = rhn_step(cells[k], input, states[k]);
        input = states[k];
        if (interlayer && k + 1 < cells.size()) input = interlayer(input);
    }
    return states.back();
}

std::vector<std::vector<TensorPtr>> StackedCell::unroll(
    const std::vector<TensorPtr>& xs, std::vector<TensorPtr> states,
    const std::function<TensorPtr(const TensorPtr&)>& interlayer) const {
    if (xs.empty()) throw ContractError("stacked cell: empty sequence");
    std::vector<std::vector<TensorPtr>> per_layer(cells.size());
    for (const auto& x : xs) {
        step(x, states, interlayer);
        for (std::size_t k = 0; k < cells.size(); ++k) per_layer[k].push_back(states[k]);
    }
    return per_layer;
}

std::size_t StackedCell::parameter_count() const {
    std::size_t total = 0;
    for (const auto& c : cells) total += c.parameter_count();
    return total;
}

void StackedCell::named_params(const std::string& prefix,
                               std::vector<std::pair<std::string, TensorPtr>>& out) const {
    for (std::size_t k = 0; k < cells.size(); ++k) {
        cells[k].named_params(prefix + std::to_string(k) + ".", out);
    }
}

}  // namespace rhnmt

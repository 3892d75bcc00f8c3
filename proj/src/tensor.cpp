#include "rhnmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "rhnmt/errors.hpp"

namespace rhnmt {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill, bool req_grad)
    : shape{rows, cols}, data(rows * cols, fill), requires_grad(req_grad) {}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    return "[" + std::to_string(shape[0]) + "x" + std::to_string(shape[1]) + "]";
}

TensorPtr tensor(std::size_t rows, std::size_t cols, double fill, bool req_grad) {
    return std::make_shared<Tensor>(rows, cols, fill, req_grad);
}

TensorPtr tensor(std::size_t rows, std::size_t cols, std::vector<double> values, bool req_grad) {
    if (values.size() != rows * cols) {
        throw ShapeError("tensor: " + std::to_string(values.size()) + " values for [" +
                         std::to_string(rows) + "x" + std::to_string(cols) + "]");
    }
    auto t = std::make_shared<Tensor>(rows, cols, 0.0, req_grad);
    t->data = std::move(values);
    return t;
}

TensorPtr row_vector(std::vector<double> values, bool req_grad) {
    return tensor(1, values.size(), std::move(values), req_grad);
}

// ---------------------------------------------------------------- tape

namespace {
thread_local GraphScope* g_scope = nullptr;
}

GraphScope::GraphScope() : prev_(g_scope) {
    g_scope = this;
}

GraphScope::~GraphScope() {
    g_scope = prev_;
}

GraphScope* GraphScope::current() {
    return g_scope;
}

void GraphScope::record(TensorPtr out, std::vector<TensorPtr> parents, std::function<void()> fn) {
    if (g_scope == nullptr) return;
    g_scope->nodes_.push_back(Node{std::move(out), std::move(parents), std::move(fn)});
}

namespace {

// Marks the output differentiable when any input is, and registers the
// backward rule with the active scope.
void finish(const TensorPtr& out, std::vector<TensorPtr> parents, std::function<void()> fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->requires_grad;
    out->requires_grad = needs;
    if (needs && GraphScope::current() != nullptr) {
        GraphScope::record(out, std::move(parents), std::move(fn));
    }
}

void check_same_shape(const char* op, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a->shape_str() + " vs " +
                         b->shape_str());
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

void backward(const TensorPtr& loss) {
    if (loss->size() != 1) {
        throw ContractError("backward: loss must be scalar, got " + loss->shape_str());
    }
    GraphScope* scope = GraphScope::current();
    // Intermediate grads are scratch: reset them so each walk adds exactly one
    // pass worth of contributions to the leaves.
    if (scope != nullptr) {
        for (auto& n : scope->nodes_) {
            n.out->ensure_grad();
            n.out->zero_grad();
        }
    }
    if (loss->requires_grad) {
        loss->ensure_grad();
        loss->grad[0] += 1.0;
    }
    if (scope == nullptr) return;
    std::unordered_set<const Tensor*> reachable;
    reachable.insert(loss.get());
    for (auto it = scope->nodes_.rbegin(); it != scope->nodes_.rend(); ++it) {
        if (reachable.count(it->out.get()) == 0) continue;
        it->run();
        for (const auto& p : it->parents) {
            if (p->requires_grad) reachable.insert(p.get());
        }
    }
}

// ---------------------------------------------------------------- ops

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    check_same_shape("add", a, b);
    auto out = tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    finish(out, {a, b}, [out, a, b] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) b->grad[i] += out->grad[i];
        }
    });
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    check_same_shape("sub", a, b);
    auto out = tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] - b->data[i];
    finish(out, {a, b}, [out, a, b] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) b->grad[i] -= out->grad[i];
        }
    });
    return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    check_same_shape("mul", a, b);
    auto out = tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    finish(out, {a, b}, [out, a, b] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < out->size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
        }
    });
    return out;
}

TensorPtr scale(const TensorPtr& a, double k) {
    auto out = tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * k;
    finish(out, {a}, [out, a, k] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i] * k;
    });
    return out;
}

TensorPtr tanh(const TensorPtr& a) {
    auto out = tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = std::tanh(a->data[i]);
    finish(out, {a}, [out, a] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < out->size(); ++i) {
            double y = out->data[i];
            a->grad[i] += out->grad[i] * (1.0 - y * y);
        }
    });
    return out;
}

TensorPtr sigmoid(const TensorPtr& a) {
    auto out = tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = stable_sigmoid(a->data[i]);
    finish(out, {a}, [out, a] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < out->size(); ++i) {
            double y = out->data[i];
            a->grad[i] += out->grad[i] * y * (1.0 - y);
        }
    });
    return out;
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->cols() != b->rows()) {
        throw ShapeError("matmul: inner dimensions disagree " + a->shape_str() + " vs " +
                         b->shape_str());
    }
    const std::size_t m = a->rows(), k = a->cols(), n = b->cols();
    auto out = tensor(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            double av = a->data[i * k + p];
            if (av == 0.0) continue;
            const double* brow = &b->data[p * n];
            double* orow = &out->data[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    finish(out, {a, b}, [out, a, b, m, k, n] {
        if (a->requires_grad) {
            a->ensure_grad();
            // a.grad += g . b^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = &out->grad[i * n];
                    const double* brow = &b->data[p * n];
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    a->grad[i * k + p] += acc;
                }
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            // b.grad += a^T . g
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = &out->grad[i * n];
                for (std::size_t p = 0; p < k; ++p) {
                    double av = a->data[i * k + p];
                    if (av == 0.0) continue;
                    double* brow = &b->grad[p * n];
                    for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
                }
            }
        }
    });
    return out;
}

TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& b) {
    if (b->rows() != 1 || b->cols() != x->cols()) {
        throw ShapeError("add_rowvec: " + x->shape_str() + " vs bias " + b->shape_str());
    }
    const std::size_t r = x->rows(), c = x->cols();
    auto out = tensor(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out->data[i * c + j] = x->data[i * c + j] + b->data[j];
    }
    finish(out, {x, b}, [out, x, b, r, c] {
        if (x->requires_grad) {
            x->ensure_grad();
            for (std::size_t i = 0; i < r * c; ++i) x->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) b->grad[j] += out->grad[i * c + j];
            }
        }
    });
    return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    const std::size_t r = parts[0]->rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p->rows() != r) {
            throw ShapeError("concat_cols: row mismatch " + parts[0]->shape_str() + " vs " +
                             p->shape_str());
        }
        total += p->cols();
    }
    auto out = tensor(r, total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < p->cols(); ++j) out->at(i, off + j) = p->at(i, j);
        }
        off += p->cols();
    }
    finish(out, parts, [out, parts, r] {
        std::size_t off2 = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < p->cols(); ++j) {
                        p->grad[i * p->cols() + j] += out->grad[i * out->cols() + off2 + j];
                    }
                }
            }
            off2 += p->cols();
        }
    });
    return out;
}

TensorPtr embedding_rows(const TensorPtr& table, const std::vector<int>& ids) {
    const std::size_t v = table->rows(), d = table->cols();
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw IndexError("embedding_rows: id " + std::to_string(id) + " outside table " +
                             table->shape_str());
        }
    }
    auto out = tensor(ids.size(), d);
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const double* src = &table->data[static_cast<std::size_t>(ids[k]) * d];
        std::copy(src, src + d, &out->data[k * d]);
    }
    finish(out, {table}, [out, table, ids, d] {
        if (!table->requires_grad) return;
        table->ensure_grad();
        for (std::size_t k = 0; k < ids.size(); ++k) {
            double* dst = &table->grad[static_cast<std::size_t>(ids[k]) * d];
            const double* g = &out->grad[k * d];
            for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
        }
    });
    return out;
}

TensorPtr row_sum(const TensorPtr& x) {
    const std::size_t r = x->rows(), c = x->cols();
    auto out = tensor(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += x->data[i * c + j];
        out->data[i] = acc;
    }
    finish(out, {x}, [out, x, r, c] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) x->grad[i * c + j] += out->grad[i];
        }
    });
    return out;
}

TensorPtr colwise_scale(const TensorPtr& x, const TensorPtr& s) {
    if (s->rows() != x->rows() || s->cols() != 1) {
        throw ShapeError("colwise_scale: " + x->shape_str() + " vs scale " + s->shape_str());
    }
    const std::size_t r = x->rows(), c = x->cols();
    auto out = tensor(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out->data[i * c + j] = x->data[i * c + j] * s->data[i];
    }
    finish(out, {x, s}, [out, x, s, r, c] {
        if (x->requires_grad) {
            x->ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    x->grad[i * c + j] += out->grad[i * c + j] * s->data[i];
                }
            }
        }
        if (s->requires_grad) {
            s->ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < c; ++j) acc += out->grad[i * c + j] * x->data[i * c + j];
                s->grad[i] += acc;
            }
        }
    });
    return out;
}

TensorPtr col(const TensorPtr& x, std::size_t j) {
    if (j >= x->cols()) {
        throw IndexError("col: column " + std::to_string(j) + " outside " + x->shape_str());
    }
    const std::size_t r = x->rows(), c = x->cols();
    auto out = tensor(r, 1);
    for (std::size_t i = 0; i < r; ++i) out->data[i] = x->data[i * c + j];
    finish(out, {x}, [out, x, j, r, c] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) x->grad[i * c + j] += out->grad[i];
    });
    return out;
}

TensorPtr masked_softmax(const TensorPtr& scores, const std::vector<int>& mask) {
    const std::size_t r = scores->rows(), c = scores->cols();
    if (mask.size() != r * c) {
        throw ShapeError("masked_softmax: mask size " + std::to_string(mask.size()) + " vs " +
                         scores->shape_str());
    }
    auto out = tensor(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) {
            if (mask[i * c + j]) mx = std::max(mx, scores->data[i * c + j]);
        }
        if (!std::isfinite(mx)) {
            throw ContractError("masked_softmax: row " + std::to_string(i) + " fully masked");
        }
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            if (mask[i * c + j]) {
                double e = std::exp(scores->data[i * c + j] - mx);
                out->data[i * c + j] = e;
                z += e;
            }
        }
        for (std::size_t j = 0; j < c; ++j) {
            if (mask[i * c + j]) out->data[i * c + j] /= z;
        }
    }
    finish(out, {scores}, [out, scores, mask, r, c] {
        if (!scores->requires_grad) return;
        scores->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                if (mask[i * c + j]) dot += out->grad[i * c + j] * out->data[i * c + j];
            }
            for (std::size_t j = 0; j < c; ++j) {
                if (mask[i * c + j]) {
                    scores->grad[i * c + j] +=
                        out->data[i * c + j] * (out->grad[i * c + j] - dot);
                }
            }
        }
    });
    return out;
}

TensorPtr softmax_cross_entropy(const TensorPtr& logits, const std::vector<int>& targets,
                                const std::vector<int>& mask) {
    const std::size_t r = logits->rows(), v = logits->cols();
    if (targets.size() != r || mask.size() != r) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets / " + std::to_string(mask.size()) + " mask entries for " +
                         logits->shape_str());
    }
    // Keep the row softmaxes for the backward rule.
    auto probs = std::make_shared<std::vector<double>>(r * v, 0.0);
    auto out = tensor(1, 1);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        if (!mask[i]) continue;
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
            throw IndexError("softmax_cross_entropy: target " + std::to_string(targets[i]) +
                             " outside vocabulary of " + std::to_string(v));
        }
        const double* row = &logits->data[i * v];
        double mx = row[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
        double logz = mx + std::log(z);
        total += logz - row[static_cast<std::size_t>(targets[i])];
        for (std::size_t j = 0; j < v; ++j) {
            (*probs)[i * v + j] = std::exp(row[j] - mx) / z;
        }
    }
    out->data[0] = total;
    finish(out, {logits}, [out, logits, targets, mask, probs, r, v] {
        if (!logits->requires_grad) return;
        logits->ensure_grad();
        double g = out->grad[0];
        for (std::size_t i = 0; i < r; ++i) {
            if (!mask[i]) continue;
            for (std::size_t j = 0; j < v; ++j) {
                double delta = (static_cast<std::size_t>(targets[i]) == j) ? 1.0 : 0.0;
                logits->grad[i * v + j] += g * ((*probs)[i * v + j] - delta);
            }
        }
    });
    return out;
}

TensorPtr sum_all(const TensorPtr& x) {
    auto out = tensor(1, 1);
    double acc = 0.0;
    for (double d : x->data) acc += d;
    out->data[0] = acc;
    finish(out, {x}, [out, x] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[0];
    });
    return out;
}

TensorPtr gather_steps(const std::vector<TensorPtr>& steps,
                       const std::vector<std::size_t>& step_index) {
    if (steps.empty()) throw ContractError("gather_steps: no steps");
    const std::size_t r = steps[0]->rows(), c = steps[0]->cols();
    if (step_index.size() != r) {
        throw ShapeError("gather_steps: " + std::to_string(step_index.size()) +
                         " indices for batch of " + std::to_string(r));
    }
    for (std::size_t b = 0; b < r; ++b) {
        if (step_index[b] >= steps.size()) {
            throw IndexError("gather_steps: step " + std::to_string(step_index[b]) +
                             " outside sequence of " + std::to_string(steps.size()));
        }
    }
    auto out = tensor(r, c);
    for (std::size_t b = 0; b < r; ++b) {
        const double* src = &steps[step_index[b]]->data[b * c];
        std::copy(src, src + c, &out->data[b * c]);
    }
    finish(out, steps, [out, steps, step_index, r, c] {
        for (std::size_t b = 0; b < r; ++b) {
            const auto& t = steps[step_index[b]];
            if (!t->requires_grad) continue;
            t->ensure_grad();
            for (std::size_t j = 0; j < c; ++j) t->grad[b * c + j] += out->grad[b * c + j];
        }
    });
    return out;
}

}  // namespace rhnmt

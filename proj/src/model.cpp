#include "rhnmt/model.hpp"

#include <cmath>

#include "rhnmt/errors.hpp"

namespace rhnmt {

namespace {

constexpr double kInitRange = 0.08;

TensorPtr uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    auto t = tensor(rows, cols, 0.0, true);
    for (auto& v : t->data) v = rng.uniform(-kInitRange, kInitRange);
    return t;
}

}  // namespace

void ModelConfig::validate() const {
    if (hidden == 0 || depth == 0 || layers == 0) {
        throw ConfigError("model config: hidden, depth and layers must be positive");
    }
    if (src_vocab < 4 || tgt_vocab < 4) {
        throw ConfigError("model config: vocabularies must include the reserved tokens");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw ConfigError("model config: dropout must lie in [0, 1)");
    }
    if (beta < 0.0) throw ConfigError("model config: beta must be >= 0");
}

AttentionParams AttentionParams::create(std::size_t hidden, Rng& rng) {
    AttentionParams a;
    a.W_a = uniform_matrix(hidden, hidden, rng);
    a.W_c = uniform_matrix(2 * hidden, hidden, rng);
    a.b_c = tensor(1, hidden, 0.0, true);
    return a;
}

void AttentionParams::named_params(const std::string& prefix,
                                   std::vector<std::pair<std::string, TensorPtr>>& out) const {
    out.emplace_back(prefix + "W_a", W_a);
    out.emplace_back(prefix + "W_c", W_c);
    out.emplace_back(prefix + "b_c", b_c);
}

void ReconstructorParams::named_params(const std::string& prefix,
                                       std::vector<std::pair<std::string, TensorPtr>>& out) const {
    cells.named_params(prefix + "cell.", out);
    attention.named_params(prefix + "attention.", out);
    out.emplace_back(prefix + "out.W", W_out);
    out.emplace_back(prefix + "out.b", b_out);
}

NmtModel NmtModel::create(const ModelConfig& config, Rng& rng) {
    config.validate();
    NmtModel m;
    m.config = config;
    const std::size_t n = config.hidden;
    m.src_embedding = uniform_matrix(config.src_vocab, n, rng);
    m.tgt_embedding = uniform_matrix(config.tgt_vocab, n, rng);
    m.encoder = StackedCell::create(n, n, config.layers, config.depth, config.coupled_carry, rng);
    m.decoder = StackedCell::create(n, n, config.layers, config.depth, config.coupled_carry, rng);
    m.attention = AttentionParams::create(n, rng);
    m.W_out = uniform_matrix(n, config.tgt_vocab, rng);
    m.b_out = tensor(1, config.tgt_vocab, 0.0, true);
    if (config.beta > 0.0) {
        ReconstructorParams r;
        r.cells = StackedCell::create(n, n, config.layers, config.depth, config.coupled_carry, rng);
        r.attention = AttentionParams::create(n, rng);
        r.W_out = uniform_matrix(n, config.src_vocab, rng);
        r.b_out = tensor(1, config.src_vocab, 0.0, true);
        m.reconstructor = std::move(r);
    }
    return m;
}

std::vector<std::pair<std::string, TensorPtr>> NmtModel::parameters() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    out.emplace_back("src_embedding", src_embedding);
    out.emplace_back("tgt_embedding", tgt_embedding);
    encoder.named_params("encoder.", out);
    decoder.named_params("decoder.", out);
    attention.named_params("attention.", out);
    out.emplace_back("out.W", W_out);
    out.emplace_back("out.b", b_out);
    if (reconstructor) reconstructor->named_params("reconstructor.", out);
    return out;
}

std::size_t NmtModel::count_parameters() const {
    std::size_t total = 0;
    for (const auto& [name, t] : parameters()) total += t->size();
    return total;
}

void NmtModel::zero_grads() const {
    for (const auto& [name, t] : parameters()) t->zero_grad();
}

TensorPtr NmtModel::maybe_dropout(const TensorPtr& x, bool training, Rng* rng) const {
    if (!training || config.dropout <= 0.0) return x;
    if (rng == nullptr) throw ContractError("dropout requires an rng during training");
    const double keep = 1.0 - config.dropout;
    auto mask = tensor(x->rows(), x->cols());
    for (auto& v : mask->data) v = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    return mul(x, mask);
}

EncodedSource NmtModel::encode(const std::vector<int>& src_ids, const std::vector<int>& src_mask,
                               std::size_t batch, std::size_t src_len, bool training,
                               Rng* rng) const {
    if (batch == 0 || src_len == 0) throw ContractError("encode: empty batch");
    if (src_ids.size() != batch * src_len || src_mask.size() != batch * src_len) {
        throw ShapeError("encode: ids/mask do not match batch " + std::to_string(batch) + " x " +
                         std::to_string(src_len));
    }
    auto interlayer = [&](const TensorPtr& h) { return maybe_dropout(h, training, rng); };

    EncodedSource enc;
    enc.mask = src_mask;
    enc.src_len = src_len;
    enc.layer_states.assign(encoder.layers(), {});
    std::vector<TensorPtr> states = encoder.zero_states(batch);
    for (std::size_t t = 0; t < src_len; ++t) {
        std::vector<int> ids(batch);
        for (std::size_t b = 0; b < batch; ++b) ids[b] = src_ids[b * src_len + t];
        TensorPtr x = maybe_dropout(embedding_rows(src_embedding, ids), training, rng);
        encoder.step(x, states, interlayer);
        for (std::size_t k = 0; k < states.size(); ++k) enc.layer_states[k].push_back(states[k]);
    }
    enc.last_pos.assign(batch, 0);
    for (std::size_t b = 0; b < batch; ++b) {
        bool any = false;
        for (std::size_t t = 0; t < src_len; ++t) {
            if (src_mask[b * src_len + t]) {
                enc.last_pos[b] = t;
                any = true;
            }
        }
        if (!any) throw ContractError("encode: row " + std::to_string(b) + " has no real tokens");
    }
    return enc;
}

EncodedSource NmtModel::encode(const PaddedBatch& batch, bool training, Rng* rng) const {
    return encode(batch.src, batch.src_mask, batch.batch_size, batch.src_len, training, rng);
}

std::vector<TensorPtr> NmtModel::decoder_init(const EncodedSource& enc) const {
    std::vector<TensorPtr> states;
    states.reserve(enc.layer_states.size());
    for (const auto& layer : enc.layer_states) {
        states.push_back(gather_steps(layer, enc.last_pos));
    }
    return states;
}

std::pair<TensorPtr, TensorPtr> NmtModel::attend(const AttentionParams& params,
                                                 const TensorPtr& query,
                                                 const std::vector<TensorPtr>& states,
                                                 const std::vector<int>& mask) {
    if (states.empty()) throw ContractError("attend: no states");
    TensorPtr q = matmul(query, params.W_a);
    std::vector<TensorPtr> scores;
    scores.reserve(states.size());
    for (const auto& h : states) scores.push_back(row_sum(mul(q, h)));
    TensorPtr weights = masked_softmax(concat_cols(scores), mask);
    TensorPtr context = colwise_scale(states[0], col(weights, 0));
    for (std::size_t s = 1; s < states.size(); ++s) {
        context = add(context, colwise_scale(states[s], col(weights, s)));
    }
    return {context, weights};
}

DecodeStep NmtModel::decode_step(const std::vector<int>& prev_ids, std::vector<TensorPtr>& states,
                                 const EncodedSource& enc, bool training, Rng* rng) const {
    auto interlayer = [&](const TensorPtr& h) { return maybe_dropout(h, training, rng); };
    TensorPtr x = maybe_dropout(embedding_rows(tgt_embedding, prev_ids), training, rng);
    TensorPtr h = decoder.step(x, states, interlayer);
    auto [context, weights] = attend(attention, h, enc.top_states(), enc.mask);
    TensorPtr combined = rhnmt::tanh(add_rowvec(matmul(concat_cols({context, h}), attention.W_c),
                                                attention.b_c));
    DecodeStep out;
    out.logits = add_rowvec(matmul(combined, W_out), b_out);
    out.attention = weights;
    out.hidden = h;
    return out;
}

TeacherForcedResult NmtModel::forward_teacher_forced(const PaddedBatch& batch, bool training,
                                                     Rng* rng) const {
    if (batch.batch_size == 0) throw ContractError("forward_teacher_forced: empty batch");
    if (batch.tgt_len == 0) throw ContractError("forward_teacher_forced: empty target");
    EncodedSource enc = encode(batch, training, rng);
    std::vector<TensorPtr> states = decoder_init(enc);

    TeacherForcedResult result;
    TensorPtr total;
    for (std::size_t t = 0; t < batch.tgt_len; ++t) {
        DecodeStep step = decode_step(batch.tgt_in_col(t), states, enc, training, rng);
        result.decoder_states.push_back(step.hidden);
        TensorPtr ce = softmax_cross_entropy(step.logits, batch.tgt_out_col(t),
                                             batch.tgt_mask_col(t));
        total = total ? add(total, ce) : ce;
    }
    result.ce_sum = total->data[0];
    result.token_count = batch.tgt_token_count();
    result.loss = scale(total, 1.0 / static_cast<double>(batch.batch_size));
    return result;
}

TeacherForcedResult NmtModel::reconstruct(const std::vector<TensorPtr>& decoder_states,
                                          const std::vector<int>& tgt_mask,
                                          const PaddedBatch& batch, bool training,
                                          Rng* rng) const {
    if (!reconstructor) throw ConfigError("reconstruct: model has no reconstructor");
    if (decoder_states.empty()) throw ContractError("reconstruct: no decoder states");
    const auto& rec = *reconstructor;
    auto interlayer = [&](const TensorPtr& h) { return maybe_dropout(h, training, rng); };

    std::vector<TensorPtr> states = rec.cells.zero_states(batch.batch_size);
    TeacherForcedResult result;
    TensorPtr total;
    for (std::size_t u = 0; u < batch.src_len; ++u) {
        // The source plays the target role here: teacher forcing feeds <sos>,
        // then the gold source tokens shifted by one.
        std::vector<int> prev(batch.batch_size, Vocabulary::kSos);
        if (u > 0) prev = batch.src_col(u - 1);
        TensorPtr x = maybe_dropout(embedding_rows(src_embedding, prev), training, rng);
        TensorPtr h = rec.cells.step(x, states, interlayer);
        auto [context, weights] = attend(rec.attention, h, decoder_states, tgt_mask);
        TensorPtr combined = rhnmt::tanh(
            add_rowvec(matmul(concat_cols({context, h}), rec.attention.W_c), rec.attention.b_c));
        TensorPtr logits = add_rowvec(matmul(combined, rec.W_out), rec.b_out);
        std::vector<int> mask_col(batch.batch_size);
        for (std::size_t b = 0; b < batch.batch_size; ++b) {
            mask_col[b] = batch.src_mask[b * batch.src_len + u];
        }
        TensorPtr ce = softmax_cross_entropy(logits, batch.src_col(u), mask_col);
        total = total ? add(total, ce) : ce;
        result.decoder_states.push_back(h);
    }
    result.ce_sum = total->data[0];
    result.token_count = batch.src_token_count();
    result.loss = scale(total, 1.0 / static_cast<double>(batch.batch_size));
    return result;
}

}  // namespace rhnmt

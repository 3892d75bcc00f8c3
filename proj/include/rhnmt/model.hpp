#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rhnmt/data.hpp"
#include "rhnmt/rhn_cell.hpp"
#include "rhnmt/rng.hpp"
#include "rhnmt/tensor.hpp"

namespace rhnmt {

struct ModelConfig {
    std::size_t hidden = 128;  // n; embeddings are tied to this width
    std::size_t depth = 1;     // recurrence depth L
    std::size_t layers = 1;    // spatially stacked cells
    std::size_t src_vocab = 0;
    std::size_t tgt_vocab = 0;
    bool coupled_carry = false;
    double dropout = 0.20;
    double beta = 0.1;  // reconstruction weight; 0 disables the reconstructor

    void validate() const;
};

// Global attention with a bilinear score and a tanh combiner over
// [context; query].
struct AttentionParams {
    TensorPtr W_a;  // n x n
    TensorPtr W_c;  // 2n x n
    TensorPtr b_c;  // 1 x n

    static AttentionParams create(std::size_t hidden, Rng& rng);
    void named_params(const std::string& prefix,
                      std::vector<std::pair<std::string, TensorPtr>>& out) const;
};

// Training-only block that re-predicts the source sentence from the decoder's
// hidden states. Shares the source embedding; never used at inference.
struct ReconstructorParams {
    StackedCell cells;
    AttentionParams attention;
    TensorPtr W_out;  // n x |V_src|
    TensorPtr b_out;  // 1 x |V_src|

    void named_params(const std::string& prefix,
                      std::vector<std::pair<std::string, TensorPtr>>& out) const;
};

// Encoder pass over one padded batch: every layer's state at every time step,
// plus each sentence's final real position for the decoder handoff.
struct EncodedSource {
    std::vector<std::vector<TensorPtr>> layer_states;  // [layer][t], batch x n
    std::vector<int> mask;                             // batch x S row-major
    std::size_t src_len = 0;
    std::vector<std::size_t> last_pos;  // per row, index of the last real token

    const std::vector<TensorPtr>& top_states() const { return layer_states.back(); }
};

struct DecodeStep {
    TensorPtr logits;       // batch x |V_tgt|
    TensorPtr attention;    // batch x S
    TensorPtr hidden;       // batch x n, top decoder state
};

struct TeacherForcedResult {
    TensorPtr loss;                   // scalar L_d (batch mean of per-sentence sums)
    std::vector<TensorPtr> decoder_states;  // top decoder state per target step
    double ce_sum = 0.0;              // summed token cross entropy
    std::size_t token_count = 0;
};

class NmtModel {
public:
    ModelConfig config;

    TensorPtr src_embedding;  // |V_src| x n
    TensorPtr tgt_embedding;  // |V_tgt| x n
    StackedCell encoder;
    StackedCell decoder;
    AttentionParams attention;
    TensorPtr W_out;  // n x |V_tgt|
    TensorPtr b_out;  // 1 x |V_tgt|
    std::optional<ReconstructorParams> reconstructor;  // present iff beta > 0

    static NmtModel create(const ModelConfig& config, Rng& rng);

    std::vector<std::pair<std::string, TensorPtr>> parameters() const;
    std::size_t count_parameters() const;
    void zero_grads() const;

    // rng drives dropout and must be non-null when training && dropout > 0.
    EncodedSource encode(const std::vector<int>& src_ids, const std::vector<int>& src_mask,
                         std::size_t batch, std::size_t src_len, bool training = false,
                         Rng* rng = nullptr) const;
    EncodedSource encode(const PaddedBatch& batch, bool training = false, Rng* rng = nullptr) const;

    // Decoder start state: each layer picks up its encoder counterpart's state
    // at the sentence's last real token.
    std::vector<TensorPtr> decoder_init(const EncodedSource& enc) const;

    // score_s = (h W_a) . H[s]; masked softmax; context = sum_s w_s H[s].
    static std::pair<TensorPtr, TensorPtr> attend(const AttentionParams& params,
                                                  const TensorPtr& query,
                                                  const std::vector<TensorPtr>& states,
                                                  const std::vector<int>& mask);

    DecodeStep decode_step(const std::vector<int>& prev_ids, std::vector<TensorPtr>& states,
                           const EncodedSource& enc, bool training = false,
                           Rng* rng = nullptr) const;

    TeacherForcedResult forward_teacher_forced(const PaddedBatch& batch, bool training = false,
                                               Rng* rng = nullptr) const;

    // Teacher-forced source reconstruction from the decoder states; returns
    // scalar L_r plus the summed cross entropy and token count.
    TeacherForcedResult reconstruct(const std::vector<TensorPtr>& decoder_states,
                                    const std::vector<int>& tgt_mask, const PaddedBatch& batch,
                                    bool training = false, Rng* rng = nullptr) const;

private:
    TensorPtr maybe_dropout(const TensorPtr& x, bool training, Rng* rng) const;
};

}  // namespace rhnmt

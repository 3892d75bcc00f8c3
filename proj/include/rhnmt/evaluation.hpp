#pragma once

#include <array>
#include <string>
#include <vector>

#include "rhnmt/data.hpp"
#include "rhnmt/decoding.hpp"
#include "rhnmt/model.hpp"

namespace rhnmt {

// Corpus-level BLEU decomposition: clipped n-gram precisions for orders 1-4,
// a brevity factor, and score = brevity * (p1 p2 p3 p4)^(1/4) in [0, 1].
struct BleuReport {
    std::array<double, 4> precisions{};
    double brevity = 0.0;
    double score = 0.0;
    std::size_t candidate_tokens = 0;
    std::size_t reference_tokens = 0;
};

enum class BleuVariant {
    kMinRatio,       // brevity = min(1, out_len / ref_len)
    kExpPenalty,     // brevity = min(1, exp(1 - ref_len / out_len))
};

// exp(mean negative log-likelihood over unmasked tokens); natural base.
double perplexity(const std::vector<double>& token_log_probs, const std::vector<int>& mask);

BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                       const std::vector<std::vector<std::string>>& references,
                       BleuVariant variant = BleuVariant::kMinRatio);

struct EvalResult {
    double perplexity = 0.0;
    BleuReport bleu;
};

// Dev-set scoring: perplexity from teacher-forced gold log-probs, BLEU from
// decoded output against the raw reference tokens.
EvalResult evaluate_model(const NmtModel& model, const ParallelCorpus& corpus,
                          const Vocabulary& tgt_vocab, const DecodeConfig& decode,
                          std::size_t eval_batch_size = 32, std::size_t threads = 1);

}  // namespace rhnmt

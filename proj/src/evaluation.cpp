#include "rhnmt/evaluation.hpp"

#include <cmath>
#include <unordered_map>

#include "rhnmt/errors.hpp"

namespace rhnmt {

double perplexity(const std::vector<double>& token_log_probs, const std::vector<int>& mask) {
    if (token_log_probs.size() != mask.size()) {
        throw ShapeError("perplexity: " + std::to_string(token_log_probs.size()) +
                         " log-probs vs " + std::to_string(mask.size()) + " mask entries");
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < token_log_probs.size(); ++i) {
        if (!mask[i]) continue;
        if (token_log_probs[i] > 1e-12) {
            throw ContractError("perplexity: log-prob " + std::to_string(token_log_probs[i]) +
                                " is positive");
        }
        total += token_log_probs[i];
        ++count;
    }
    if (count == 0) throw ContractError("perplexity: no unmasked tokens");
    return std::exp(-total / static_cast<double>(count));
}

namespace {

// n-grams keyed by their tokens joined with an unprintable separator.
std::unordered_map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& tokens,
                                                          std::size_t order) {
    std::unordered_map<std::string, std::size_t> counts;
    if (tokens.size() < order) return counts;
    for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
        std::string key;
        for (std::size_t j = 0; j < order; ++j) {
            if (j) key.push_back('\x1f');
            key += tokens[i + j];
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace

BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                       const std::vector<std::vector<std::string>>& references,
                       BleuVariant variant) {
    if (candidates.empty()) throw ContractError("corpus_bleu: empty corpus");
    if (candidates.size() != references.size()) {
        throw DataError("corpus_bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                        std::to_string(references.size()) + " references");
    }

    BleuReport report;
    std::array<std::size_t, 4> matched{};
    std::array<std::size_t, 4> total{};
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        report.candidate_tokens += candidates[i].size();
        report.reference_tokens += references[i].size();
        for (std::size_t order = 1; order <= 4; ++order) {
            auto cand = ngram_counts(candidates[i], order);
            auto ref = ngram_counts(references[i], order);
            for (const auto& [gram, count] : cand) {
                total[order - 1] += count;
                auto it = ref.find(gram);
                if (it != ref.end()) matched[order - 1] += std::min(count, it->second);
            }
        }
    }

    for (std::size_t k = 0; k < 4; ++k) {
        // An order with no candidate n-grams at all (every sentence shorter
        // than k+1 tokens) carries no evidence; neutral 1.0 keeps an exact
        // match at score 1 for very short corpora.
        report.precisions[k] = total[k] == 0 ? 1.0
                                             : static_cast<double>(matched[k]) /
                                                   static_cast<double>(total[k]);
    }

    if (report.candidate_tokens == 0) {
        report.brevity = 0.0;
    } else if (variant == BleuVariant::kMinRatio) {
        report.brevity = std::min(1.0, static_cast<double>(report.candidate_tokens) /
                                           static_cast<double>(report.reference_tokens));
    } else {
        report.brevity = std::min(1.0, std::exp(1.0 - static_cast<double>(report.reference_tokens) /
                                                          static_cast<double>(report.candidate_tokens)));
    }

    report.score = report.brevity * std::pow(report.precisions[0] * report.precisions[1] *
                                                 report.precisions[2] * report.precisions[3],
                                             0.25);
    return report;
}

EvalResult evaluate_model(const NmtModel& model, const ParallelCorpus& corpus,
                          const Vocabulary& tgt_vocab, const DecodeConfig& decode,
                          std::size_t eval_batch_size, std::size_t threads) {
    if (corpus.pairs.empty()) throw ContractError("evaluate_model: empty corpus");

    // Gold perplexity, teacher forced; masks cancel the padding.
    double ce_sum = 0.0;
    std::size_t tokens = 0;
    for (std::size_t start = 0; start < corpus.pairs.size(); start += eval_batch_size) {
        std::vector<EncodedPair> chunk(
            corpus.pairs.begin() + static_cast<std::ptrdiff_t>(start),
            corpus.pairs.begin() +
                static_cast<std::ptrdiff_t>(std::min(corpus.pairs.size(), start + eval_batch_size)));
        PaddedBatch batch = pad_batch(chunk);
        TeacherForcedResult fwd = model.forward_teacher_forced(batch);
        ce_sum += fwd.ce_sum;
        tokens += fwd.token_count;
    }

    std::vector<std::vector<int>> sources;
    sources.reserve(corpus.pairs.size());
    for (const auto& p : corpus.pairs) sources.push_back(p.src);
    auto outputs = translate_corpus(model, sources, decode, threads);

    std::vector<std::vector<std::string>> candidates;
    candidates.reserve(outputs.size());
    for (const auto& o : outputs) {
        std::vector<std::string> toks;
        toks.reserve(o.tokens.size());
        for (int id : o.tokens) toks.push_back(tgt_vocab.token(id));
        candidates.push_back(std::move(toks));
    }

    EvalResult result;
    result.perplexity = std::exp(ce_sum / static_cast<double>(tokens));
    result.bleu = corpus_bleu(candidates, corpus.tgt_tokens);
    return result;
}

}  // namespace rhnmt

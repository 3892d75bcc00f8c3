#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rhnmt/errors.hpp"
#include "rhnmt/model.hpp"

namespace rhnmt {

// A partial decode: emitted tokens (including the closing <eos> once
// finished), their accumulated natural-log probability, and whether <eos> has
// been produced. Finished hypotheses are never extended.
struct Hypothesis {
    std::vector<int> tokens;
    double log_prob = 0.0;
    bool finished = false;

    double normalized_score() const {
        return log_prob / static_cast<double>(std::max<std::size_t>(1, tokens.size()));
    }
};

struct DecodeOutput {
    std::vector<int> tokens;  // surface tokens: no <sos>, no <eos>
    double log_prob = 0.0;
    bool truncated = false;           // hit max_len without emitting <eos>
    std::vector<Hypothesis> nbest;    // beam search only, ranked
};

// Steppers drive decoding: `State initial_state()`, and
// `std::vector<double> step(State&, int prev_token)` returning the
// log-probabilities of the next token while advancing the state. States must
// be copyable snapshots.

namespace detail {

inline int argmax_lowest_id(const std::vector<double>& log_probs) {
    int best = 0;
    for (int v = 1; v < static_cast<int>(log_probs.size()); ++v) {
        if (log_probs[static_cast<std::size_t>(v)] > log_probs[static_cast<std::size_t>(best)]) {
            best = v;
        }
    }
    return best;
}

}  // namespace detail

template <typename Stepper>
DecodeOutput greedy_decode(const Stepper& stepper, std::size_t max_len) {
    if (max_len == 0) throw ConfigError("greedy_decode: max_len must be >= 1");
    typename Stepper::State state = stepper.initial_state();
    DecodeOutput out;
    out.truncated = true;
    int prev = Vocabulary::kSos;
    for (std::size_t i = 0; i < max_len; ++i) {
        std::vector<double> lp = stepper.step(state, prev);
        int tok = detail::argmax_lowest_id(lp);
        out.log_prob += lp[static_cast<std::size_t>(tok)];
        if (tok == Vocabulary::kEos) {
            out.truncated = false;
            break;
        }
        out.tokens.push_back(tok);
        prev = tok;
    }
    return out;
}

template <typename Stepper>
DecodeOutput beam_decode(const Stepper& stepper, std::size_t beam_width, std::size_t max_len) {
    if (beam_width == 0) throw ConfigError("beam_decode: beam width must be >= 1");
    if (max_len == 0) throw ConfigError("beam_decode: max_len must be >= 1");

    struct Item {
        Hypothesis hyp;
        typename Stepper::State state;
    };

    auto by_score_then_lex = [](const Item& a, const Item& b) {
        if (a.hyp.log_prob != b.hyp.log_prob) return a.hyp.log_prob > b.hyp.log_prob;
        return a.hyp.tokens < b.hyp.tokens;
    };

    std::vector<Item> active;
    active.push_back(Item{Hypothesis{}, stepper.initial_state()});
    std::vector<Item> finished;

    for (std::size_t step = 0; step < max_len; ++step) {
        if (active.empty() || finished.size() >= beam_width) break;
        std::vector<Item> candidates;
        for (const auto& item : active) {
            typename Stepper::State advanced = item.state;
            int prev = item.hyp.tokens.empty() ? Vocabulary::kSos : item.hyp.tokens.back();
            std::vector<double> lp = stepper.step(advanced, prev);
            for (int v = 0; v < static_cast<int>(lp.size()); ++v) {
                Item child{item.hyp, advanced};
                child.hyp.tokens.push_back(v);
                child.hyp.log_prob += lp[static_cast<std::size_t>(v)];
                child.hyp.finished = (v == Vocabulary::kEos);
                candidates.push_back(std::move(child));
            }
        }
        std::sort(candidates.begin(), candidates.end(), by_score_then_lex);
        if (candidates.size() > beam_width) candidates.resize(beam_width);
        active.clear();
        for (auto& c : candidates) {
            if (c.hyp.finished) {
                finished.push_back(std::move(c));
            } else {
                active.push_back(std::move(c));
            }
        }
    }

    // Final pool: everything set aside plus whatever the frontier still holds
    // (truncated paths), ranked by length-normalized score.
    std::vector<Hypothesis> pool;
    for (auto& f : finished) pool.push_back(std::move(f.hyp));
    for (auto& a : active) pool.push_back(std::move(a.hyp));
    std::sort(pool.begin(), pool.end(), [](const Hypothesis& a, const Hypothesis& b) {
        double na = a.normalized_score(), nb = b.normalized_score();
        if (na != nb) return na > nb;
        return a.tokens < b.tokens;
    });
    if (pool.size() > beam_width) pool.resize(beam_width);

    DecodeOutput out;
    out.nbest = pool;
    const Hypothesis& best = pool.front();
    out.log_prob = best.log_prob;
    out.truncated = !best.finished;
    for (int t : best.tokens) {
        if (t != Vocabulary::kEos) out.tokens.push_back(t);
    }
    return out;
}

// Adapts a trained model to the stepper interface for one source sentence.
// The source is encoded once up front; decoding runs in evaluation mode and
// never touches the reconstructor.
class NmtStepper {
public:
    NmtStepper(const NmtModel& model, const std::vector<int>& framed_src);

    struct State {
        std::vector<TensorPtr> decoder_states;
    };

    State initial_state() const;
    std::vector<double> step(State& state, int prev_token) const;
    std::size_t source_length() const { return src_len_; }

private:
    const NmtModel& model_;
    EncodedSource enc_;
    std::size_t src_len_ = 0;
};

struct DecodeConfig {
    std::size_t beam_width = 1;
    std::size_t max_len = 0;  // 0: 2 * source_length + 10
};

std::size_t effective_max_len(const DecodeConfig& config, std::size_t source_length);

// Decodes one framed source sentence (ids with trailing <eos>).
DecodeOutput translate_sentence(const NmtModel& model, const std::vector<int>& framed_src,
                                const DecodeConfig& config);

// Decodes many sentences, in order; parallel across sentences when threads > 1.
std::vector<DecodeOutput> translate_corpus(const NmtModel& model,
                                           const std::vector<std::vector<int>>& framed_src,
                                           const DecodeConfig& config, std::size_t threads = 1);

// Reads RHNMT_THREADS; defaults to 1.
std::size_t evaluation_threads();

}  // namespace rhnmt

#pragma once

// Hand-specified conditional model for decoding tests: every prefix of
// emitted tokens maps to a log-probability row over the vocabulary; prefixes
// without a table entry fall back to uniform. Doubles as the model for the
// brute-force enumeration oracle.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "rhnmt/decoding.hpp"

namespace rhnmt::testing {

struct TableStepper {
    std::size_t vocab = 0;
    std::map<std::vector<int>, std::vector<double>> table;  // prefix -> log probs

    using State = std::vector<int>;  // emitted tokens so far

    State initial_state() const { return {}; }

    std::vector<double> step(State& state, int prev_token) const {
        if (prev_token != Vocabulary::kSos) state.push_back(prev_token);
        auto it = table.find(state);
        if (it != table.end()) return it->second;
        return std::vector<double>(vocab, -std::log(static_cast<double>(vocab)));
    }
};

// Normalized log-prob row from unnormalized weights.
inline std::vector<double> log_row(std::vector<double> weights) {
    double z = 0.0;
    for (double w : weights) z += w;
    std::vector<double> out(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) out[i] = std::log(weights[i] / z);
    return out;
}

// Every sequence of <= max_len emissions (stopping early at <eos>), scored by
// the same tables.
inline std::vector<Hypothesis> enumerate_all(const TableStepper& stepper, std::size_t max_len) {
    std::vector<Hypothesis> all;
    struct Frame {
        std::vector<int> tokens;
        double log_prob;
    };
    std::vector<Frame> frontier{{{}, 0.0}};
    for (std::size_t step = 0; step < max_len; ++step) {
        std::vector<Frame> next;
        for (const auto& f : frontier) {
            int prev = f.tokens.empty() ? Vocabulary::kSos : f.tokens.back();
            // step() appends prev to the state it is given, so hand it the
            // prefix without its last token; the lookup key ends up being the
            // full prefix.
            TableStepper::State key = f.tokens;
            if (!key.empty()) key.pop_back();
            std::vector<double> lp = stepper.step(key, prev);
            for (int v = 0; v < static_cast<int>(stepper.vocab); ++v) {
                Frame child{f.tokens, f.log_prob + lp[static_cast<std::size_t>(v)]};
                child.tokens.push_back(v);
                if (v == Vocabulary::kEos) {
                    all.push_back(Hypothesis{child.tokens, child.log_prob, true});
                } else if (step + 1 == max_len) {
                    all.push_back(Hypothesis{child.tokens, child.log_prob, false});
                } else {
                    next.push_back(std::move(child));
                }
            }
        }
        frontier = std::move(next);
    }
    std::sort(all.begin(), all.end(), [](const Hypothesis& a, const Hypothesis& b) {
        double na = a.normalized_score(), nb = b.normalized_score();
        if (na != nb) return na > nb;
        return a.tokens < b.tokens;
    });
    return all;
}

}  // namespace rhnmt::testing

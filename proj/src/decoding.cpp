#include "rhnmt/decoding.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

namespace rhnmt {

NmtStepper::NmtStepper(const NmtModel& model, const std::vector<int>& framed_src)
    : model_(model), src_len_(framed_src.size()) {
    if (framed_src.empty()) throw ContractError("stepper: empty source");
    std::vector<int> mask(framed_src.size(), 1);
    enc_ = model.encode(framed_src, mask, 1, framed_src.size());
}

NmtStepper::State NmtStepper::initial_state() const {
    return State{model_.decoder_init(enc_)};
}

std::vector<double> NmtStepper::step(State& state, int prev_token) const {
    DecodeStep step = model_.decode_step({prev_token}, state.decoder_states, enc_);
    const auto& logits = step.logits->data;
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    double logz = mx + std::log(z);
    std::vector<double> lp(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) lp[i] = logits[i] - logz;
    return lp;
}

std::size_t effective_max_len(const DecodeConfig& config, std::size_t source_length) {
    return config.max_len != 0 ? config.max_len : 2 * source_length + 10;
}

DecodeOutput translate_sentence(const NmtModel& model, const std::vector<int>& framed_src,
                                const DecodeConfig& config) {
    NmtStepper stepper(model, framed_src);
    std::size_t max_len = effective_max_len(config, stepper.source_length());
    if (config.beam_width <= 1) return greedy_decode(stepper, max_len);
    return beam_decode(stepper, config.beam_width, max_len);
}

std::vector<DecodeOutput> translate_corpus(const NmtModel& model,
                                           const std::vector<std::vector<int>>& framed_src,
                                           const DecodeConfig& config, std::size_t threads) {
    std::vector<DecodeOutput> out(framed_src.size());
    if (threads <= 1 || framed_src.size() <= 1) {
        for (std::size_t i = 0; i < framed_src.size(); ++i) {
            out[i] = translate_sentence(model, framed_src[i], config);
        }
        return out;
    }
    threads = std::min(threads, framed_src.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < framed_src.size(); i += threads) {
                out[i] = translate_sentence(model, framed_src[i], config);
            }
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

std::size_t evaluation_threads() {
    const char* env = std::getenv("RHNMT_THREADS");
    if (env == nullptr) return 1;
    long v = std::strtol(env, nullptr, 10);
    return v > 1 ? static_cast<std::size_t>(v) : 1;
}

}  // namespace rhnmt

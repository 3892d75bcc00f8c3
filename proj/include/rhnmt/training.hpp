#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rhnmt/data.hpp"
#include "rhnmt/model.hpp"

namespace rhnmt {

struct TrainingConfig {
    double learning_rate = 0.1;
    double dropout = 0.20;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    double beta = 0.1;
    double grad_clip_norm = 5.0;  // <= 0 disables clipping
    std::uint64_t seed = 42;
    std::size_t checkpoint_interval = 0;  // steps; 0 = epoch ends only
    std::size_t max_steps = 0;            // 0 = run all epochs
    bool bucketing = true;

    void validate() const;
};

struct StepRecord {
    std::size_t step = 0;
    double loss_d = 0.0;
    double loss_r = 0.0;
    double loss = 0.0;
    double perplexity = 0.0;  // training perplexity of the step's batch
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double dev_perplexity = 0.0;
    double dev_bleu = 0.0;
};

struct TrainingLog {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
};

struct StepLosses {
    double loss_d = 0.0;
    double loss_r = 0.0;
    double loss = 0.0;
    double ce_sum = 0.0;
    std::size_t token_count = 0;
};

// Scales all gradients so the global L2 norm does not exceed max_norm;
// returns the factor applied.
double clip_gradients(const std::vector<std::pair<std::string, TensorPtr>>& params,
                      double max_norm);

// p <- p - lr * grad for every parameter with a populated gradient.
void sgd_update(const std::vector<std::pair<std::string, TensorPtr>>& params,
                double learning_rate);

// One SGD step on one batch: forward, backward, clip, update. The returned
// losses are the values before the update. The rng drives dropout.
StepLosses train_step(NmtModel& model, const PaddedBatch& batch, const TrainingConfig& config,
                      Rng& rng, std::size_t step_index = 0);

// Optional side effects of the training loop.
struct TrainHooks {
    // Called after checkpoint_interval steps and at every epoch end.
    std::function<void(const NmtModel&, std::size_t step, std::size_t epoch)> checkpoint;
    // Per-step TSV rows: step, L_d, L_r, L, perplexity.
    std::ostream* log_stream = nullptr;
    // Per-epoch dev scoring; null disables.
    std::function<std::pair<double, double>(const NmtModel&)> dev_eval;
};

TrainingLog train(NmtModel& model, const std::vector<EncodedPair>& corpus,
                  const TrainingConfig& config, const TrainHooks& hooks = {});

void write_log_row(std::ostream& out, const StepRecord& row);

}  // namespace rhnmt

#include "rhnmt/training.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "rhnmt/errors.hpp"

namespace rhnmt {

void TrainingConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("training: learning_rate must be > 0");
    if (epochs == 0) throw ConfigError("training: epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("training: batch_size must be >= 1");
    if (beta < 0.0) throw ConfigError("training: beta must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("training: dropout must lie in [0, 1)");
}

double clip_gradients(const std::vector<std::pair<std::string, TensorPtr>>& params,
                      double max_norm) {
    double sq = 0.0;
    for (const auto& [name, t] : params) {
        for (double g : t->grad) sq += g * g;
    }
    double norm = std::sqrt(sq);
    if (max_norm <= 0.0 || norm <= max_norm) return 1.0;
    double factor = max_norm / norm;
    for (const auto& [name, t] : params) {
        for (double& g : t->grad) g *= factor;
    }
    return factor;
}

void sgd_update(const std::vector<std::pair<std::string, TensorPtr>>& params,
                double learning_rate) {
    for (const auto& [name, t] : params) {
        if (t->grad.empty()) continue;
        for (std::size_t i = 0; i < t->data.size(); ++i) {
            t->data[i] -= learning_rate * t->grad[i];
        }
    }
}

StepLosses train_step(NmtModel& model, const PaddedBatch& batch, const TrainingConfig& config,
                      Rng& rng, std::size_t step_index) {
    if (batch.batch_size == 0) throw ContractError("train_step: empty batch");
    model.zero_grads();

    StepLosses losses;
    {
        GraphScope graph;
        TeacherForcedResult fwd = model.forward_teacher_forced(batch, true, &rng);
        TensorPtr total = fwd.loss;
        losses.loss_d = fwd.loss->data[0];
        losses.ce_sum = fwd.ce_sum;
        losses.token_count = fwd.token_count;
        if (config.beta > 0.0 && model.reconstructor) {
            TeacherForcedResult rec =
                model.reconstruct(fwd.decoder_states, batch.tgt_mask, batch, true, &rng);
            losses.loss_r = rec.loss->data[0];
            total = add(total, scale(rec.loss, config.beta));
        }
        losses.loss = total->data[0];
        if (!std::isfinite(losses.loss)) {
            throw TrainingDiverged("non-finite loss at step " + std::to_string(step_index));
        }
        backward(total);
    }

    auto params = model.parameters();
    clip_gradients(params, config.grad_clip_norm);
    sgd_update(params, config.learning_rate);
    return losses;
}

void write_log_row(std::ostream& out, const StepRecord& row) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%zu\t%.17g\t%.17g\t%.17g\t%.17g\n", row.step, row.loss_d,
                  row.loss_r, row.loss, row.perplexity);
    out << buf;
}

TrainingLog train(NmtModel& model, const std::vector<EncodedPair>& corpus,
                  const TrainingConfig& config, const TrainHooks& hooks) {
    config.validate();
    if (corpus.empty()) throw ConfigError("train: empty corpus");

    TrainingLog log;
    Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    std::size_t step = 0;
    bool done = false;
    for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
        auto batches =
            make_batches(corpus, config.batch_size, config.bucketing, config.seed + epoch);
        for (const auto& batch : batches) {
            ++step;
            StepLosses losses = train_step(model, batch, config, dropout_rng, step);
            StepRecord rec;
            rec.step = step;
            rec.loss_d = losses.loss_d;
            rec.loss_r = losses.loss_r;
            rec.loss = losses.loss;
            rec.perplexity =
                losses.token_count ? std::exp(losses.ce_sum / static_cast<double>(losses.token_count))
                                   : 1.0;
            log.steps.push_back(rec);
            if (hooks.log_stream) write_log_row(*hooks.log_stream, rec);
            if (hooks.checkpoint && config.checkpoint_interval != 0 &&
                step % config.checkpoint_interval == 0) {
                hooks.checkpoint(model, step, epoch + 1);
            }
            if (config.max_steps != 0 && step >= config.max_steps) {
                done = true;
                break;
            }
        }
        EpochRecord er;
        er.epoch = epoch + 1;
        er.step = step;
        if (hooks.dev_eval) {
            auto [ppl, bleu] = hooks.dev_eval(model);
            er.dev_perplexity = ppl;
            er.dev_bleu = bleu;
        }
        log.epochs.push_back(er);
        if (hooks.checkpoint) hooks.checkpoint(model, step, epoch + 1);
    }
    return log;
}

}  // namespace rhnmt

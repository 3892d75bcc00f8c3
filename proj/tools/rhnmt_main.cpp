// Command-line front end: train, translate, score.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rhnmt/checkpoint.hpp"
#include "rhnmt/data.hpp"
#include "rhnmt/decoding.hpp"
#include "rhnmt/errors.hpp"
#include "rhnmt/evaluation.hpp"
#include "rhnmt/model.hpp"
#include "rhnmt/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string timestamp_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

struct TrainArgs {
    std::string src, tgt, dev_src, dev_tgt;
    std::string out_dir = "run";
    std::string vocab_src, vocab_tgt;
    std::size_t src_vocab_size = 17000;
    std::size_t tgt_vocab_size = 7700;
    std::size_t max_sentence_len = 100;
    std::size_t hidden = 128;
    std::size_t depth = 1;
    std::size_t layers = 1;
    bool coupled_carry = false;
    double beta = 0.1;
    double lr = 0.1;
    double dropout = 0.20;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    std::size_t max_steps = 0;
    std::uint64_t seed = 42;
    double grad_clip = 5.0;
    std::size_t checkpoint_interval = 0;
    std::size_t dev_beam_width = 1;
    bool keep_epoch_checkpoints = false;
};

json train_args_to_json(const TrainArgs& a) {
    return json{{"src", a.src},
                {"tgt", a.tgt},
                {"dev_src", a.dev_src},
                {"dev_tgt", a.dev_tgt},
                {"out_dir", a.out_dir},
                {"vocab_src", a.vocab_src},
                {"vocab_tgt", a.vocab_tgt},
                {"src_vocab_size", a.src_vocab_size},
                {"tgt_vocab_size", a.tgt_vocab_size},
                {"max_sentence_len", a.max_sentence_len},
                {"hidden", a.hidden},
                {"depth", a.depth},
                {"layers", a.layers},
                {"coupled_carry", a.coupled_carry},
                {"beta", a.beta},
                {"lr", a.lr},
                {"dropout", a.dropout},
                {"batch_size", a.batch_size},
                {"epochs", a.epochs},
                {"max_steps", a.max_steps},
                {"seed", a.seed},
                {"grad_clip", a.grad_clip},
                {"checkpoint_interval", a.checkpoint_interval},
                {"dev_beam_width", a.dev_beam_width},
                {"keep_epoch_checkpoints", a.keep_epoch_checkpoints}};
}

void train_args_from_json(const json& j, TrainArgs& a) {
    j.at("src").get_to(a.src);
    j.at("tgt").get_to(a.tgt);
    j.at("dev_src").get_to(a.dev_src);
    j.at("dev_tgt").get_to(a.dev_tgt);
    j.at("out_dir").get_to(a.out_dir);
    j.at("vocab_src").get_to(a.vocab_src);
    j.at("vocab_tgt").get_to(a.vocab_tgt);
    j.at("src_vocab_size").get_to(a.src_vocab_size);
    j.at("tgt_vocab_size").get_to(a.tgt_vocab_size);
    j.at("max_sentence_len").get_to(a.max_sentence_len);
    j.at("hidden").get_to(a.hidden);
    j.at("depth").get_to(a.depth);
    j.at("layers").get_to(a.layers);
    j.at("coupled_carry").get_to(a.coupled_carry);
    j.at("beta").get_to(a.beta);
    j.at("lr").get_to(a.lr);
    j.at("dropout").get_to(a.dropout);
    j.at("batch_size").get_to(a.batch_size);
    j.at("epochs").get_to(a.epochs);
    j.at("max_steps").get_to(a.max_steps);
    j.at("seed").get_to(a.seed);
    j.at("grad_clip").get_to(a.grad_clip);
    j.at("checkpoint_interval").get_to(a.checkpoint_interval);
    j.at("dev_beam_width").get_to(a.dev_beam_width);
    j.at("keep_epoch_checkpoints").get_to(a.keep_epoch_checkpoints);
}

int run_train(const TrainArgs& args) {
    if (args.src.empty() || args.tgt.empty()) {
        std::cerr << "train: --src and --tgt are required\n";
        return 2;
    }
    const std::string started = timestamp_now();
    fs::create_directories(args.out_dir);

    rhnmt::Vocabulary vocab_src, vocab_tgt;
    std::string vocab_src_path = args.vocab_src;
    std::string vocab_tgt_path = args.vocab_tgt;
    if (!args.vocab_src.empty()) {
        vocab_src = rhnmt::Vocabulary::load(args.vocab_src);
    } else {
        vocab_src = rhnmt::Vocabulary::build(rhnmt::read_lines(args.src), args.src_vocab_size);
        vocab_src_path = (fs::path(args.out_dir) / "vocab.src").string();
        vocab_src.save(vocab_src_path);
    }
    if (!args.vocab_tgt.empty()) {
        vocab_tgt = rhnmt::Vocabulary::load(args.vocab_tgt);
    } else {
        vocab_tgt = rhnmt::Vocabulary::build(rhnmt::read_lines(args.tgt), args.tgt_vocab_size);
        vocab_tgt_path = (fs::path(args.out_dir) / "vocab.tgt").string();
        vocab_tgt.save(vocab_tgt_path);
    }

    rhnmt::ParallelCorpus corpus = rhnmt::load_parallel(args.src, args.tgt, vocab_src, vocab_tgt,
                                                        args.max_sentence_len);
    std::optional<rhnmt::ParallelCorpus> dev;
    if (!args.dev_src.empty() && !args.dev_tgt.empty()) {
        dev = rhnmt::load_parallel(args.dev_src, args.dev_tgt, vocab_src, vocab_tgt,
                                   args.max_sentence_len);
    }

    rhnmt::ModelConfig mc;
    mc.hidden = args.hidden;
    mc.depth = args.depth;
    mc.layers = args.layers;
    mc.src_vocab = vocab_src.size();
    mc.tgt_vocab = vocab_tgt.size();
    mc.coupled_carry = args.coupled_carry;
    mc.dropout = args.dropout;
    mc.beta = args.beta;
    rhnmt::Rng init_rng(args.seed);
    rhnmt::NmtModel model = rhnmt::NmtModel::create(mc, init_rng);
    std::cout << "model parameters: " << model.count_parameters() << "\n";

    rhnmt::TrainingConfig tc;
    tc.learning_rate = args.lr;
    tc.dropout = args.dropout;
    tc.batch_size = args.batch_size;
    tc.epochs = args.epochs;
    tc.beta = args.beta;
    tc.grad_clip_norm = args.grad_clip;
    tc.seed = args.seed;
    tc.checkpoint_interval = args.checkpoint_interval;
    tc.max_steps = args.max_steps;

    const std::string ckpt_path = (fs::path(args.out_dir) / "model.ckpt").string();
    const std::string log_path = (fs::path(args.out_dir) / "train.log.tsv").string();
    std::ofstream log_stream(log_path);

    rhnmt::TrainHooks hooks;
    hooks.log_stream = &log_stream;
    hooks.checkpoint = [&](const rhnmt::NmtModel& m, std::size_t step, std::size_t epoch) {
        rhnmt::save_checkpoint(m, vocab_src, vocab_tgt, ckpt_path);
        if (args.keep_epoch_checkpoints) {
            rhnmt::save_checkpoint(m, vocab_src, vocab_tgt,
                                   (fs::path(args.out_dir) /
                                    ("model.step" + std::to_string(step) + ".ckpt"))
                                       .string());
        }
        (void)epoch;
    };
    if (dev) {
        hooks.dev_eval = [&](const rhnmt::NmtModel& m) {
            rhnmt::DecodeConfig dc;
            dc.beam_width = args.dev_beam_width;
            rhnmt::EvalResult r =
                rhnmt::evaluate_model(m, *dev, vocab_tgt, dc, 32, rhnmt::evaluation_threads());
            std::cout << "dev perplexity " << r.perplexity << "  dev BLEU " << r.bleu.score
                      << " (" << r.bleu.score * 100.0 << ")\n";
            return std::make_pair(r.perplexity, r.bleu.score);
        };
    }

    rhnmt::TrainingLog log = rhnmt::train(model, corpus.pairs, tc, hooks);
    rhnmt::save_checkpoint(model, vocab_src, vocab_tgt, ckpt_path);
    if (!log.steps.empty()) {
        std::cout << "final step " << log.steps.back().step << "  loss " << log.steps.back().loss
                  << "  train ppl " << log.steps.back().perplexity << "\n";
    }

    json manifest = {{"command", "train"},
                     {"config", train_args_to_json(args)},
                     {"artifacts",
                      {{"checkpoint", ckpt_path},
                       {"log", log_path},
                       {"vocab_src", vocab_src_path},
                       {"vocab_tgt", vocab_tgt_path}}},
                     {"started_at", started},
                     {"finished_at", timestamp_now()}};
    std::ofstream mf(fs::path(args.out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    return 0;
}

struct TranslateArgs {
    std::string checkpoint, vocab_src, vocab_tgt;
    std::string input, output, nbest;
    std::size_t beam_width = 1;
    std::size_t max_len = 0;
};

int run_translate(const TranslateArgs& args) {
    rhnmt::Vocabulary vocab_src = rhnmt::Vocabulary::load(args.vocab_src);
    rhnmt::Vocabulary vocab_tgt = rhnmt::Vocabulary::load(args.vocab_tgt);
    rhnmt::NmtModel model = rhnmt::load_checkpoint(args.checkpoint, vocab_src, vocab_tgt);

    std::vector<std::string> lines = rhnmt::read_lines(args.input);
    std::vector<std::vector<int>> framed;
    std::vector<std::size_t> line_of;  // framed index -> input line
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto toks = rhnmt::split_tokens(lines[i]);
        if (toks.empty()) continue;
        std::vector<int> ids;
        ids.reserve(toks.size() + 1);
        for (const auto& t : toks) ids.push_back(vocab_src.id(t));
        ids.push_back(rhnmt::Vocabulary::kEos);
        framed.push_back(std::move(ids));
        line_of.push_back(i);
    }

    rhnmt::DecodeConfig dc;
    dc.beam_width = args.beam_width;
    dc.max_len = args.max_len;
    auto outputs = rhnmt::translate_corpus(model, framed, dc, rhnmt::evaluation_threads());

    std::ofstream out(args.output);
    if (!out) throw rhnmt::DataError("translate: cannot write " + args.output);
    std::ofstream nbest_out;
    if (!args.nbest.empty()) {
        nbest_out.open(args.nbest);
        if (!nbest_out) throw rhnmt::DataError("translate: cannot write " + args.nbest);
    }
    std::size_t k = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (k < line_of.size() && line_of[k] == i) {
            const auto& o = outputs[k];
            for (std::size_t j = 0; j < o.tokens.size(); ++j) {
                if (j) out << ' ';
                out << vocab_tgt.token(o.tokens[j]);
            }
            out << '\n';
            if (nbest_out.is_open()) {
                for (const auto& hyp : o.nbest) {
                    nbest_out << i << " ||| " << hyp.normalized_score() << " |||";
                    for (int t : hyp.tokens) {
                        if (t != rhnmt::Vocabulary::kEos) nbest_out << ' ' << vocab_tgt.token(t);
                    }
                    nbest_out << '\n';
                }
            }
            ++k;
        } else {
            out << '\n';  // blank input line stays blank
        }
    }
    return 0;
}

struct ScoreArgs {
    std::string candidates, references;
    std::string bleu_variant = "paper";
    std::string checkpoint, vocab_src, vocab_tgt, src, tgt;
};

int run_score(const ScoreArgs& args) {
    bool scored = false;
    if (!args.candidates.empty() || !args.references.empty()) {
        if (args.candidates.empty() || args.references.empty()) {
            std::cerr << "score: --candidates and --references go together\n";
            return 2;
        }
        auto cand_lines = rhnmt::read_lines(args.candidates);
        auto ref_lines = rhnmt::read_lines(args.references);
        if (cand_lines.size() != ref_lines.size()) {
            throw rhnmt::DataError("score: " + std::to_string(cand_lines.size()) +
                                   " candidate lines vs " + std::to_string(ref_lines.size()) +
                                   " reference lines");
        }
        std::vector<std::vector<std::string>> cand, ref;
        for (const auto& l : cand_lines) cand.push_back(rhnmt::split_tokens(l));
        for (const auto& l : ref_lines) ref.push_back(rhnmt::split_tokens(l));
        rhnmt::BleuVariant variant = args.bleu_variant == "standard-bp"
                                         ? rhnmt::BleuVariant::kExpPenalty
                                         : rhnmt::BleuVariant::kMinRatio;
        rhnmt::BleuReport r = rhnmt::corpus_bleu(cand, ref, variant);
        std::cout << "bleu " << r.score << "\n";
        std::cout << "bleu_x100 " << r.score * 100.0 << "\n";
        for (int i = 0; i < 4; ++i) {
            std::cout << "precision_" << (i + 1) << " " << r.precisions[static_cast<std::size_t>(i)]
                      << "\n";
        }
        std::cout << "brevity " << r.brevity << "\n";
        std::cout << "candidate_tokens " << r.candidate_tokens << "\n";
        std::cout << "reference_tokens " << r.reference_tokens << "\n";
        scored = true;
    }
    if (!args.checkpoint.empty()) {
        if (args.src.empty() || args.tgt.empty() || args.vocab_src.empty() ||
            args.vocab_tgt.empty()) {
            std::cerr << "score: model perplexity needs --vocab-src, --vocab-tgt, --src, --tgt\n";
            return 2;
        }
        rhnmt::Vocabulary vocab_src = rhnmt::Vocabulary::load(args.vocab_src);
        rhnmt::Vocabulary vocab_tgt = rhnmt::Vocabulary::load(args.vocab_tgt);
        rhnmt::NmtModel model = rhnmt::load_checkpoint(args.checkpoint, vocab_src, vocab_tgt);
        rhnmt::ParallelCorpus corpus =
            rhnmt::load_parallel(args.src, args.tgt, vocab_src, vocab_tgt, 0);
        double ce_sum = 0.0;
        std::size_t tokens = 0;
        for (std::size_t start = 0; start < corpus.pairs.size(); start += 32) {
            std::vector<rhnmt::EncodedPair> chunk(
                corpus.pairs.begin() + static_cast<std::ptrdiff_t>(start),
                corpus.pairs.begin() +
                    static_cast<std::ptrdiff_t>(std::min(corpus.pairs.size(), start + 32)));
            auto fwd = model.forward_teacher_forced(rhnmt::pad_batch(chunk));
            ce_sum += fwd.ce_sum;
            tokens += fwd.token_count;
        }
        std::cout << "perplexity " << std::exp(ce_sum / static_cast<double>(tokens)) << "\n";
        scored = true;
    }
    if (!scored) {
        std::cerr << "score: nothing to do; pass --candidates/--references or --checkpoint\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recurrent highway network machine translation toolkit"};
    app.require_subcommand(1);

    TrainArgs train_args;
    std::string from_manifest;
    // Pre-scan so manifest values become the defaults that explicit flags
    // then override.
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--from-manifest") from_manifest = argv[i + 1];
    }
    if (!from_manifest.empty()) {
        std::ifstream mf(from_manifest);
        if (!mf) {
            std::cerr << "cannot read manifest " << from_manifest << "\n";
            return 2;
        }
        json j = json::parse(mf);
        train_args_from_json(j.at("config"), train_args);
    }

    CLI::App* train_cmd = app.add_subcommand("train", "Train a translation model");
    train_cmd->add_option("--from-manifest", from_manifest, "Rerun the configuration of a manifest");
    train_cmd->add_option("--src", train_args.src, "Source training corpus");
    train_cmd->add_option("--tgt", train_args.tgt, "Target training corpus");
    train_cmd->add_option("--dev-src", train_args.dev_src, "Source dev corpus");
    train_cmd->add_option("--dev-tgt", train_args.dev_tgt, "Target dev corpus");
    train_cmd->add_option("--out-dir", train_args.out_dir, "Artifact directory");
    train_cmd->add_option("--vocab-src", train_args.vocab_src, "Existing source vocabulary");
    train_cmd->add_option("--vocab-tgt", train_args.vocab_tgt, "Existing target vocabulary");
    train_cmd->add_option("--src-vocab-size", train_args.src_vocab_size, "Source vocabulary cap");
    train_cmd->add_option("--tgt-vocab-size", train_args.tgt_vocab_size, "Target vocabulary cap");
    train_cmd->add_option("--max-sentence-len", train_args.max_sentence_len,
                          "Skip longer sentences (0 = keep all)");
    train_cmd->add_option("--hidden", train_args.hidden, "Hidden units n");
    train_cmd->add_option("--depth", train_args.depth, "Recurrence depth L");
    train_cmd->add_option("--layers", train_args.layers, "Stacked RHN layers");
    train_cmd->add_flag("--coupled-carry", train_args.coupled_carry, "Couple carry to 1 - t");
    train_cmd->add_option("--beta", train_args.beta, "Reconstruction weight");
    train_cmd->add_option("--lr", train_args.lr, "SGD learning rate");
    train_cmd->add_option("--dropout", train_args.dropout, "Dropout rate");
    train_cmd->add_option("--batch-size", train_args.batch_size, "Batch size");
    train_cmd->add_option("--epochs", train_args.epochs, "Training epochs");
    train_cmd->add_option("--max-steps", train_args.max_steps, "Stop after N steps (0 = off)");
    train_cmd->add_option("--seed", train_args.seed, "RNG seed");
    train_cmd->add_option("--grad-clip", train_args.grad_clip,
                          "Global gradient norm cap (<= 0 disables)");
    train_cmd->add_option("--checkpoint-interval", train_args.checkpoint_interval,
                          "Checkpoint every N steps (0 = epoch ends only)");
    train_cmd->add_option("--dev-beam-width", train_args.dev_beam_width, "Dev decode beam width");
    train_cmd->add_flag("--keep-epoch-checkpoints", train_args.keep_epoch_checkpoints,
                        "Keep step-tagged checkpoint copies");

    TranslateArgs tr_args;
    CLI::App* tr_cmd = app.add_subcommand("translate", "Decode a file with a trained model");
    tr_cmd->add_option("--checkpoint", tr_args.checkpoint, "Model checkpoint")->required();
    tr_cmd->add_option("--vocab-src", tr_args.vocab_src, "Source vocabulary")->required();
    tr_cmd->add_option("--vocab-tgt", tr_args.vocab_tgt, "Target vocabulary")->required();
    tr_cmd->add_option("--input", tr_args.input, "Input sentences, one per line")->required();
    tr_cmd->add_option("--output", tr_args.output, "Output file")->required();
    tr_cmd->add_option("--beam-width", tr_args.beam_width, "Beam width (1 = greedy)");
    tr_cmd->add_option("--max-len", tr_args.max_len,
                       "Decode length cap (0 = 2*source_length + 10)");
    tr_cmd->add_option("--nbest", tr_args.nbest, "Write the ranked n-best list here");

    ScoreArgs sc_args;
    CLI::App* sc_cmd = app.add_subcommand("score", "BLEU and perplexity scoring");
    sc_cmd->add_option("--candidates", sc_args.candidates, "Candidate translations");
    sc_cmd->add_option("--references", sc_args.references, "Reference translations");
    sc_cmd->add_option("--bleu-variant", sc_args.bleu_variant, "paper | standard-bp")
        ->check(CLI::IsMember({"paper", "standard-bp"}));
    sc_cmd->add_option("--checkpoint", sc_args.checkpoint, "Model checkpoint for perplexity");
    sc_cmd->add_option("--vocab-src", sc_args.vocab_src, "Source vocabulary");
    sc_cmd->add_option("--vocab-tgt", sc_args.vocab_tgt, "Target vocabulary");
    sc_cmd->add_option("--src", sc_args.src, "Source side to score");
    sc_cmd->add_option("--tgt", sc_args.tgt, "Target side to score");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed()) return run_train(train_args);
        if (tr_cmd->parsed()) return run_translate(tr_args);
        if (sc_cmd->parsed()) return run_score(sc_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

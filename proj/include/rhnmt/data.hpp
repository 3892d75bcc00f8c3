#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rhnmt/rng.hpp"

namespace rhnmt {

// Token <-> id bijection with four reserved ids at the front. Any token not
// in the table resolves to <unk>; the literal strings of the reserved tokens
// resolve to their reserved ids even if they occur in a corpus.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kSos = 2;
    static constexpr int kEos = 3;

    Vocabulary();

    // Frequency-ranked build, ties broken lexicographically. max_size caps the
    // total size including the reserved ids (0 = unbounded); tokens below
    // min_freq are dropped.
    static Vocabulary build(const std::vector<std::string>& lines, std::size_t max_size = 0,
                            std::size_t min_freq = 1);

    int id(const std::string& token) const;
    const std::string& token(int id) const;
    std::size_t size() const { return tokens_.size(); }

    std::uint64_t checksum() const;  // FNV-1a over the token list

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    void push(const std::string& token);
};

std::vector<std::string> split_tokens(const std::string& line);

// One framed sentence pair: src carries a trailing <eos>; tgt_in is
// <sos>-prefixed and tgt_out <eos>-suffixed, shifted by one against each other.
struct EncodedPair {
    std::vector<int> src;
    std::vector<int> tgt_in;
    std::vector<int> tgt_out;
};

// Frames one pair; empty lines (after tokenization) yield nullopt.
std::optional<EncodedPair> encode_pair(const std::string& src_line, const std::string& tgt_line,
                                       const Vocabulary& src_vocab, const Vocabulary& tgt_vocab);

// Aligned-corpus view kept for scoring: raw token rows plus their encodings.
struct ParallelCorpus {
    std::vector<std::vector<std::string>> src_tokens;
    std::vector<std::vector<std::string>> tgt_tokens;
    std::vector<EncodedPair> pairs;
};

std::vector<std::string> read_lines(const std::string& path);

// Loads two aligned files, skipping empty and over-long records with a note
// on stderr. Line counts must agree.
ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path,
                             const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                             std::size_t max_len = 100, bool quiet = false);

// Padded, masked batch. Masks are 1 exactly on real tokens.
struct PaddedBatch {
    std::size_t batch_size = 0;
    std::size_t src_len = 0;  // S
    std::size_t tgt_len = 0;  // T
    std::vector<int> src;       // batch x S
    std::vector<int> src_mask;  // batch x S
    std::vector<int> tgt_in;    // batch x T
    std::vector<int> tgt_out;   // batch x T
    std::vector<int> tgt_mask;  // batch x T

    std::vector<int> src_col(std::size_t t) const;
    std::vector<int> tgt_in_col(std::size_t t) const;
    std::vector<int> tgt_out_col(std::size_t t) const;
    std::vector<int> tgt_mask_col(std::size_t t) const;
    std::size_t tgt_token_count() const;
    std::size_t src_token_count() const;
};

PaddedBatch pad_batch(const std::vector<EncodedPair>& pairs);

// Groups pairs into batches. With bucketing, pairs of equal source length are
// shuffled within their bucket and chunked together before the batch order is
// shuffled; without it, pairs are shuffled globally first.
std::vector<PaddedBatch> make_batches(const std::vector<EncodedPair>& pairs,
                                      std::size_t batch_size, bool bucketing, std::uint64_t seed);

}  // namespace rhnmt

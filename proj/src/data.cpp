#include "rhnmt/data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "rhnmt/errors.hpp"

namespace rhnmt {

namespace {
const char* kReserved[4] = {"<pad>", "<unk>", "<sos>", "<eos>"};
}

Vocabulary::Vocabulary() {
    for (const char* t : kReserved) push(t);
}

void Vocabulary::push(const std::string& token) {
    index_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& lines, std::size_t max_size,
                             std::size_t min_freq) {
    std::map<std::string, std::size_t> freq;
    for (const auto& line : lines) {
        for (const auto& tok : split_tokens(line)) ++freq[tok];
    }
    if (freq.empty()) throw ConfigError("build_vocab: corpus has no tokens");

    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    for (const auto& [tok, count] : ranked) {
        if (count < min_freq) break;
        if (max_size != 0 && v.size() >= max_size) break;
        if (v.index_.count(tok)) continue;  // literal reserved strings keep their fixed ids
        v.push(tok);
    }
    return v;
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw IndexError("vocabulary: id " + std::to_string(id) + " outside size " +
                         std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& tok : tokens_) {
        for (unsigned char c : tok) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= '\n';
        h *= 1099511628211ull;
    }
    return h;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("vocabulary: cannot write " + path);
    for (const auto& tok : tokens_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("vocabulary: cannot read " + path);
    Vocabulary v;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (row < 4) {
            if (line != kReserved[row]) {
                throw DataError("vocabulary: " + path + " line " + std::to_string(row + 1) +
                                " must be " + kReserved[row] + ", got '" + line + "'");
            }
        } else {
            if (line.empty()) throw DataError("vocabulary: empty token at line " +
                                              std::to_string(row + 1) + " of " + path);
            if (v.index_.count(line)) {
                throw DataError("vocabulary: duplicate token '" + line + "' in " + path);
            }
            v.push(line);
        }
        ++row;
    }
    if (row < 4) throw DataError("vocabulary: " + path + " is missing the reserved tokens");
    return v;
}

std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream iss(line);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

std::optional<EncodedPair> encode_pair(const std::string& src_line, const std::string& tgt_line,
                                       const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
    auto src_toks = split_tokens(src_line);
    auto tgt_toks = split_tokens(tgt_line);
    if (src_toks.empty() || tgt_toks.empty()) return std::nullopt;

    EncodedPair p;
    p.src.reserve(src_toks.size() + 1);
    for (const auto& t : src_toks) p.src.push_back(src_vocab.id(t));
    p.src.push_back(Vocabulary::kEos);

    p.tgt_in.reserve(tgt_toks.size() + 1);
    p.tgt_out.reserve(tgt_toks.size() + 1);
    p.tgt_in.push_back(Vocabulary::kSos);
    for (const auto& t : tgt_toks) {
        int id = tgt_vocab.id(t);
        p.tgt_in.push_back(id);
        p.tgt_out.push_back(id);
    }
    p.tgt_out.push_back(Vocabulary::kEos);
    return p;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path,
                             const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                             std::size_t max_len, bool quiet) {
    auto src_lines = read_lines(src_path);
    auto tgt_lines = read_lines(tgt_path);
    if (src_lines.size() != tgt_lines.size()) {
        throw DataError("parallel corpus line counts differ: " + src_path + " has " +
                        std::to_string(src_lines.size()) + ", " + tgt_path + " has " +
                        std::to_string(tgt_lines.size()));
    }
    ParallelCorpus corpus;
    for (std::size_t i = 0; i < src_lines.size(); ++i) {
        auto src_toks = split_tokens(src_lines[i]);
        auto tgt_toks = split_tokens(tgt_lines[i]);
        if (src_toks.empty() || tgt_toks.empty()) {
            if (!quiet) std::cerr << "skipping empty record at line " << (i + 1) << "\n";
            continue;
        }
        if (max_len != 0 && (src_toks.size() > max_len || tgt_toks.size() > max_len)) {
            if (!quiet) {
                std::cerr << "skipping over-long record at line " << (i + 1) << " ("
                          << src_toks.size() << "/" << tgt_toks.size() << " tokens, cap "
                          << max_len << ")\n";
            }
            continue;
        }
        auto pair = encode_pair(src_lines[i], tgt_lines[i], src_vocab, tgt_vocab);
        corpus.pairs.push_back(std::move(*pair));
        corpus.src_tokens.push_back(std::move(src_toks));
        corpus.tgt_tokens.push_back(std::move(tgt_toks));
    }
    return corpus;
}

std::vector<int> PaddedBatch::src_col(std::size_t t) const {
    std::vector<int> out(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) out[b] = src[b * src_len + t];
    return out;
}

std::vector<int> PaddedBatch::tgt_in_col(std::size_t t) const {
    std::vector<int> out(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) out[b] = tgt_in[b * tgt_len + t];
    return out;
}

std::vector<int> PaddedBatch::tgt_out_col(std::size_t t) const {
    std::vector<int> out(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) out[b] = tgt_out[b * tgt_len + t];
    return out;
}

std::vector<int> PaddedBatch::tgt_mask_col(std::size_t t) const {
    std::vector<int> out(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) out[b] = tgt_mask[b * tgt_len + t];
    return out;
}

std::size_t PaddedBatch::tgt_token_count() const {
    std::size_t n = 0;
    for (int m : tgt_mask) n += static_cast<std::size_t>(m);
    return n;
}

std::size_t PaddedBatch::src_token_count() const {
    std::size_t n = 0;
    for (int m : src_mask) n += static_cast<std::size_t>(m);
    return n;
}

PaddedBatch pad_batch(const std::vector<EncodedPair>& pairs) {
    if (pairs.empty()) throw ContractError("pad_batch: empty batch");
    PaddedBatch b;
    b.batch_size = pairs.size();
    for (const auto& p : pairs) {
        b.src_len = std::max(b.src_len, p.src.size());
        b.tgt_len = std::max(b.tgt_len, p.tgt_in.size());
    }
    b.src.assign(b.batch_size * b.src_len, Vocabulary::kPad);
    b.src_mask.assign(b.batch_size * b.src_len, 0);
    b.tgt_in.assign(b.batch_size * b.tgt_len, Vocabulary::kPad);
    b.tgt_out.assign(b.batch_size * b.tgt_len, Vocabulary::kPad);
    b.tgt_mask.assign(b.batch_size * b.tgt_len, 0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        for (std::size_t t = 0; t < p.src.size(); ++t) {
            b.src[i * b.src_len + t] = p.src[t];
            b.src_mask[i * b.src_len + t] = 1;
        }
        for (std::size_t t = 0; t < p.tgt_in.size(); ++t) {
            b.tgt_in[i * b.tgt_len + t] = p.tgt_in[t];
            b.tgt_out[i * b.tgt_len + t] = p.tgt_out[t];
            b.tgt_mask[i * b.tgt_len + t] = 1;
        }
    }
    return b;
}

std::vector<PaddedBatch> make_batches(const std::vector<EncodedPair>& pairs,
                                      std::size_t batch_size, bool bucketing,
                                      std::uint64_t seed) {
    if (batch_size == 0) throw ConfigError("make_batches: batch_size must be >= 1");
    if (pairs.empty()) return {};
    Rng rng(seed);

    std::vector<std::size_t> order;
    order.reserve(pairs.size());
    if (bucketing) {
        std::map<std::size_t, std::vector<std::size_t>> buckets;
        for (std::size_t i = 0; i < pairs.size(); ++i) buckets[pairs[i].src.size()].push_back(i);
        for (auto& [len, members] : buckets) {
            rng.shuffle(members);
            order.insert(order.end(), members.begin(), members.end());
        }
    } else {
        for (std::size_t i = 0; i < pairs.size(); ++i) order.push_back(i);
        rng.shuffle(order);
    }

    std::vector<std::vector<EncodedPair>> chunks;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::vector<EncodedPair> chunk;
        for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
            chunk.push_back(pairs[order[i]]);
        }
        chunks.push_back(std::move(chunk));
    }
    rng.shuffle(chunks);

    std::vector<PaddedBatch> batches;
    batches.reserve(chunks.size());
    for (const auto& chunk : chunks) batches.push_back(pad_batch(chunk));
    return batches;
}

}  // namespace rhnmt

#include "rhnmt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "rhnmt/errors.hpp"

namespace rhnmt {

namespace {

constexpr const char* kMagic = "rhnmt-checkpoint 1";

void write_f64_le(std::ostream& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_f64_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

std::string hex64(std::uint64_t v) {
    std::ostringstream oss;
    oss << std::hex << v;
    return oss.str();
}

}  // namespace

void save_checkpoint(const NmtModel& model, const Vocabulary& src_vocab,
                     const Vocabulary& tgt_vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write " + path);
    const auto& c = model.config;
    out << kMagic << "\n";
    out << "hidden " << c.hidden << "\n";
    out << "depth " << c.depth << "\n";
    out << "layers " << c.layers << "\n";
    out << "src_vocab " << c.src_vocab << "\n";
    out << "tgt_vocab " << c.tgt_vocab << "\n";
    out << "coupled_carry " << (c.coupled_carry ? 1 : 0) << "\n";
    out << "dropout " << c.dropout << "\n";
    out << "beta " << c.beta << "\n";
    out << "src_vocab_checksum " << hex64(src_vocab.checksum()) << "\n";
    out << "tgt_vocab_checksum " << hex64(tgt_vocab.checksum()) << "\n";
    auto params = model.parameters();
    for (const auto& [name, t] : params) {
        out << "tensor " << name << " " << t->rows() << " " << t->cols() << "\n";
    }
    out << "end\n";
    for (const auto& [name, t] : params) {
        for (double v : t->data) write_f64_le(out, v);
    }
    if (!out) throw DataError("checkpoint: write failed for " + path);
}

NmtModel load_checkpoint(const std::string& path, const Vocabulary& src_vocab,
                         const Vocabulary& tgt_vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMagic) {
        throw DataError("checkpoint: " + path + " is not a checkpoint file");
    }

    std::map<std::string, std::string> fields;
    struct DirEntry {
        std::string name;
        std::size_t rows, cols;
    };
    std::vector<DirEntry> directory;
    while (std::getline(in, line)) {
        if (line == "end") break;
        std::istringstream iss(line);
        std::string key;
        iss >> key;
        if (key == "tensor") {
            DirEntry e;
            iss >> e.name >> e.rows >> e.cols;
            if (!iss) throw DataError("checkpoint: malformed directory line '" + line + "'");
            directory.push_back(e);
        } else {
            std::string value;
            iss >> value;
            fields[key] = value;
        }
    }

    auto field = [&](const std::string& key) -> std::string {
        auto it = fields.find(key);
        if (it == fields.end()) throw DataError("checkpoint: missing field " + key);
        return it->second;
    };

    ModelConfig config;
    config.hidden = std::stoul(field("hidden"));
    config.depth = std::stoul(field("depth"));
    config.layers = std::stoul(field("layers"));
    config.src_vocab = std::stoul(field("src_vocab"));
    config.tgt_vocab = std::stoul(field("tgt_vocab"));
    config.coupled_carry = field("coupled_carry") == "1";
    config.dropout = std::stod(field("dropout"));
    config.beta = std::stod(field("beta"));

    if (field("src_vocab_checksum") != hex64(src_vocab.checksum())) {
        throw DataError("checkpoint: source vocabulary checksum mismatch");
    }
    if (field("tgt_vocab_checksum") != hex64(tgt_vocab.checksum())) {
        throw DataError("checkpoint: target vocabulary checksum mismatch");
    }
    if (config.src_vocab != src_vocab.size() || config.tgt_vocab != tgt_vocab.size()) {
        throw DataError("checkpoint: vocabulary sizes disagree with the header");
    }

    Rng rng(0);
    NmtModel model = NmtModel::create(config, rng);
    auto params = model.parameters();
    std::map<std::string, TensorPtr> by_name(params.begin(), params.end());
    if (directory.size() != params.size()) {
        throw DataError("checkpoint: directory lists " + std::to_string(directory.size()) +
                        " tensors, model has " + std::to_string(params.size()));
    }
    for (const auto& e : directory) {
        auto it = by_name.find(e.name);
        if (it == by_name.end()) throw DataError("checkpoint: unknown tensor " + e.name);
        const auto& t = it->second;
        if (t->rows() != e.rows || t->cols() != e.cols) {
            throw DataError("checkpoint: tensor " + e.name + " has shape [" +
                            std::to_string(e.rows) + "x" + std::to_string(e.cols) +
                            "], model expects " + t->shape_str());
        }
        for (double& v : t->data) v = read_f64_le(in);
        if (!in) throw DataError("checkpoint: truncated data for tensor " + e.name);
    }
    return model;
}

}  // namespace rhnmt

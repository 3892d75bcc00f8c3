#pragma once

#include <string>

#include "rhnmt/data.hpp"
#include "rhnmt/model.hpp"

namespace rhnmt {

// Checkpoint layout: a plain-text header (config fields, vocabulary
// checksums, then one directory line per tensor with its shape), an `end`
// marker, and the raw tensor blocks as little-endian 64-bit floats in
// directory order. Loading rebuilds the model from the header and validates
// every tensor shape and both vocabulary checksums.
void save_checkpoint(const NmtModel& model, const Vocabulary& src_vocab,
                     const Vocabulary& tgt_vocab, const std::string& path);

NmtModel load_checkpoint(const std::string& path, const Vocabulary& src_vocab,
                         const Vocabulary& tgt_vocab);

}  // namespace rhnmt

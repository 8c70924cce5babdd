#pragma once

#include <string>

#include "qrec/autodiff.hpp"

namespace qrec {

// Binary checkpoint: a named-parameter list.
//
//   magic line     "QREC-CKPT v1\n"              (13 bytes, ASCII)
//   u32  count                                   (little-endian)
//   per parameter, in ParameterSet order:
//     u32  name_len, name bytes (no terminator)
//     u32  rank
//     u64  dims[rank]
//     f64  values[prod(dims)]                    (IEEE-754 little-endian)
//
// Loading restores values into an existing ParameterSet and fails loudly on
// any mismatch: unknown or missing names, or a shape that differs from the
// constructed model (the message names both shapes).
void save_checkpoint(const std::string& path, const ad::ParameterSet& params);
void load_checkpoint(const std::string& path, ad::ParameterSet& params);

}  // namespace qrec

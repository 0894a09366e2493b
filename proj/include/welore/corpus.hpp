// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "welore/transformer.hpp"

namespace welore {

/// Raw byte corpus (UTF-8 text files, byte-level tokens).
struct Corpus {
  std::vector<std::uint8_t> bytes;

  /// Reads a file, or every regular file of a directory in name order.
  static Corpus from_path(const std::filesystem::path& path);
  static Corpus from_text(std::string_view text);
};

/// `batch` random windows of seq_len + 1 bytes.
TokenBatch sample_batch(const Corpus& corpus, std::size_t batch,
                        std::size_t seq_len, std::mt19937_64& rng);

/// Consecutive non-overlapping windows from the start of the corpus, at
/// most max_tokens predicted tokens in total.
TokenBatch eval_windows(const Corpus& corpus, std::size_t seq_len,
                        std::size_t max_tokens);

enum class CorpusStyle {
  kProse,    // templated sentences over a small lexicon
  kRecords,  // key/value inventory records with arithmetic totals
};

/// Deterministic synthetic text of exactly `bytes` bytes.
std::string synthetic_text(std::size_t bytes, std::uint64_t seed,
                           CorpusStyle style = CorpusStyle::kProse);

}  // namespace welore

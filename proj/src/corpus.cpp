// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>

#include "welore/error.hpp"

namespace welore {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kFormat, "cannot open corpus file " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& words, std::mt19937_64& rng) {
  return words[rng() % N];
}

constexpr std::array<std::string_view, 12> kNouns = {
    "river", "teacher", "garden", "engine", "child", "market",
    "window", "farmer", "lantern", "village", "sailor", "forest"};
constexpr std::array<std::string_view, 10> kAdjectives = {
    "quiet", "old", "bright", "small", "heavy", "green", "broken", "warm", "distant", "clever"};
constexpr std::array<std::string_view, 10> kVerbs = {
    "watches", "carries", "finds", "builds", "follows", "paints", "remembers", "opens", "sells", "greets"};
constexpr std::array<std::string_view, 8> kPlaces = {
    "near the bridge", "after the rain", "in the morning", "by the old wall",
    "under the stars", "at the harbor", "before dinner", "along the road"};
constexpr std::array<std::string_view, 8> kItems = {
    "apples", "bolts", "candles", "ropes", "jars", "maps", "nails", "lamps"};

std::string prose_sentence(std::mt19937_64& rng) {
  std::string s = "The ";
  if (rng() % 2) {
    s += pick(kAdjectives, rng);
    s += ' ';
  }
  s += pick(kNouns, rng);
  s += ' ';
  s += pick(kVerbs, rng);
  s += " the ";
  s += pick(kAdjectives, rng);
  s += ' ';
  s += pick(kNouns, rng);
  if (rng() % 3 == 0) {
    s += ' ';
    s += pick(kPlaces, rng);
  }
  s += rng() % 5 == 0 ? ". \n" : ". ";
  return s;
}

std::string record_line(std::mt19937_64& rng) {
  const unsigned a = static_cast<unsigned>(rng() % 50);
  const unsigned b = static_cast<unsigned>(rng() % 50);
  std::string s = "item=";
  s += pick(kItems, rng);
  s += "; in=" + std::to_string(a) + "; out=" + std::to_string(b) +
       "; sum=" + std::to_string(a + b) + ";\n";
  return s;
}

}  // namespace

Corpus Corpus::from_path(const std::filesystem::path& path) {
  Corpus c;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto b = read_bytes(f);
      c.bytes.insert(c.bytes.end(), b.begin(), b.end());
    }
  } else {
    c.bytes = read_bytes(path);
  }
  if (c.bytes.empty()) throw Error(ErrorCode::kFormat, "corpus is empty: " + path.string());
  return c;
}

Corpus Corpus::from_text(std::string_view text) {
  return Corpus{std::vector<std::uint8_t>(text.begin(), text.end())};
}

TokenBatch sample_batch(const Corpus& corpus, std::size_t batch, std::size_t seq_len,
                        std::mt19937_64& rng) {
  if (corpus.bytes.size() < seq_len + 1)
    throw Error(ErrorCode::kInvalidArgument, "corpus shorter than one training window");
  const std::size_t span = corpus.bytes.size() - seq_len;
  TokenBatch b;
  b.sequences.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t off = rng() % span;
    b.sequences.emplace_back(corpus.bytes.begin() + static_cast<std::ptrdiff_t>(off),
                             corpus.bytes.begin() + static_cast<std::ptrdiff_t>(off + seq_len + 1));
  }
  return b;
}

TokenBatch eval_windows(const Corpus& corpus, std::size_t seq_len, std::size_t max_tokens) {
  if (corpus.bytes.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "evaluation corpus needs at least two bytes");
  TokenBatch b;
  std::size_t used = 0;
  for (std::size_t off = 0; off + 1 < corpus.bytes.size() && used < max_tokens; off += seq_len) {
    const std::size_t len = std::min({seq_len, corpus.bytes.size() - 1 - off, max_tokens - used});
    b.sequences.emplace_back(corpus.bytes.begin() + static_cast<std::ptrdiff_t>(off),
                             corpus.bytes.begin() + static_cast<std::ptrdiff_t>(off + len + 1));
    used += len;
  }
  return b;
}

std::string synthetic_text(std::size_t bytes, std::uint64_t seed, CorpusStyle style) {
  std::mt19937_64 rng(seed);
  std::string out;
  out.reserve(bytes + 128);
  while (out.size() < bytes)
    out += style == CorpusStyle::kProse ? prose_sentence(rng) : record_line(rng);
  out.resize(bytes);
  return out;
}

}  // namespace welore

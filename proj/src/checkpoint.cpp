// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "welore/error.hpp"

namespace welore {

namespace {

using json = nlohmann::ordered_json;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t off, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
  return v;
}

void put_tensor(std::vector<std::uint8_t>& out, const Matrix& m) {
  for (double v : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

// One serialized record: a named tensor or a factored projection.
struct Record {
  std::string name;
  std::string kind;  // dense | factored
  std::string role;  // embedding | norm | head | projection
  std::size_t rows = 0, cols = 0, rank = 0;
  std::string split;
  LayerClass cls = LayerClass::kUnlabeled;
  std::vector<Matrix*> tensors;
};

std::vector<Record> records(Model& model) {
  std::vector<Record> out;
  auto plain = [&out](std::string name, std::string role, Matrix& m) {
    Record r;
    r.name = std::move(name);
    r.kind = "dense";
    r.role = std::move(role);
    r.rows = m.rows();
    r.cols = m.cols();
    r.tensors = {&m};
    out.push_back(std::move(r));
  };
  auto proj = [&out](Projection& p) {
    Record r;
    r.name = p.name;
    r.role = "projection";
    r.rows = p.rows();
    r.cols = p.cols();
    r.cls = p.cls;
    if (auto* d = std::get_if<DenseWeight>(&p.weight)) {
      r.kind = "dense";
      r.tensors = {&d->w};
    } else {
      auto& f = std::get<FactoredWeight>(p.weight);
      r.kind = "factored";
      r.rank = f.a.cols();
      r.split = f.split;
      r.tensors = {&f.a, &f.b};
    }
    out.push_back(std::move(r));
  };
  plain("embed", "embedding", model.embed);
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    Block& b = model.blocks[l];
    const std::string prefix = "layers." + std::to_string(l) + ".";
    plain(prefix + "input_layernorm", "norm", b.attn_norm);
    proj(b.q);
    proj(b.k);
    proj(b.v);
    proj(b.o);
    plain(prefix + "post_attention_layernorm", "norm", b.mlp_norm);
    proj(b.gate);
    proj(b.up);
    proj(b.down);
  }
  plain("norm", "norm", model.final_norm);
  plain("lm_head", "head", model.head);
  return out;
}

json config_to_json(const ModelConfig& c) {
  return json{{"vocab", c.vocab},       {"d_model", c.d_model},
              {"n_layers", c.n_layers}, {"n_heads", c.n_heads},
              {"d_ff", c.d_ff},         {"max_seq", c.max_seq},
              {"rope_base", c.rope_base}, {"norm_eps", c.norm_eps}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.vocab = j.at("vocab").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.max_seq = j.at("max_seq").get<std::size_t>();
  c.rope_base = j.at("rope_base").get<double>();
  c.norm_eps = j.at("norm_eps").get<double>();
  return c;
}

[[noreturn]] void inconsistent(const std::string& what) {
  throw Error(ErrorCode::kShapeInconsistent, "checkpoint: " + what);
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = ::crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> save(const Model& model) {
  Model copy = model;
  for (const auto* p : copy.projections())
    if (p->lora)
      throw Error(ErrorCode::kInvalidArgument,
                  "save: projection '" + p->name + "' has an unfolded adapter");

  std::vector<std::uint8_t> payload;
  json tensors = json::array();
  for (const auto& r : records(copy)) {
    json t{{"name", r.name}, {"kind", r.kind}, {"role", r.role},
           {"shape", {r.rows, r.cols}}};
    if (r.kind == "factored") {
      t["rank"] = r.rank;
      t["sv_split"] = r.split;
    }
    if (r.role == "projection") t["class"] = std::string(to_string(r.cls));
    tensors.push_back(std::move(t));
    for (const Matrix* m : r.tensors) put_tensor(payload, *m);
  }

  json meta{{"config", config_to_json(model.config)},
            {"tensors", std::move(tensors)},
            {"payload_bytes", payload.size()},
            {"crc32", crc32(payload)}};
  const std::string meta_text = meta.dump();

  std::vector<std::uint8_t> out;
  out.reserve(16 + meta_text.size() + payload.size());
  out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u64(out, meta_text.size());
  out.insert(out.end(), meta_text.begin(), meta_text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

LoadResult load(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw Error(ErrorCode::kBadMagic, "checkpoint: bad magic (expected WLR1)");
  if (bytes.size() < 16)
    throw Error(ErrorCode::kTruncated, "checkpoint: truncated header");
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::kVersionMismatch,
                "checkpoint: version " + std::to_string(version) +
                    " (supported: " + std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t meta_len = get_le(bytes, 8, 8);
  if (meta_len > bytes.size() - 16)
    throw Error(ErrorCode::kTruncated, "checkpoint: truncated metadata");

  json meta;
  try {
    meta = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(meta_len));
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kFormat, std::string("checkpoint metadata: ") + ex.what());
  }
  const auto payload = bytes.subspan(16 + meta_len);

  LoadResult result;
  try {
    Model& m = result.model;
    m.config = config_from_json(meta.at("config"));
    m.config.validate();
    // Skeleton with the expected structure; shapes come from metadata.
    m.embed = Matrix();
    m.blocks.resize(m.config.n_layers);
    for (std::size_t l = 0; l < m.config.n_layers; ++l) {
      const std::string prefix = "layers." + std::to_string(l) + ".";
      auto& b = m.blocks[l];
      for (auto* p : b.projections()) p->weight = DenseWeight{};
      b.q.kind = ProjKind::kQ;
      b.k.kind = ProjKind::kK;
      b.v.kind = ProjKind::kV;
      b.o.kind = ProjKind::kO;
      b.gate.kind = ProjKind::kGate;
      b.up.kind = ProjKind::kUp;
      b.down.kind = ProjKind::kDown;
      for (auto* p : b.projections()) p->name = prefix + std::string(to_string(p->kind));
    }

    const json& tensors = meta.at("tensors");
    std::vector<Record> expected = records(m);
    if (tensors.size() != expected.size())
      inconsistent("expected " + std::to_string(expected.size()) + " tensors, metadata lists " +
                   std::to_string(tensors.size()));

    std::uint64_t need = 0;
    for (const auto& t : tensors) {
      const std::size_t rows = t.at("shape").at(0).get<std::size_t>();
      const std::size_t cols = t.at("shape").at(1).get<std::size_t>();
      if (t.at("kind") == "factored") {
        const std::size_t r = t.at("rank").get<std::size_t>();
        need += 4ull * r * (rows + cols);
      } else {
        need += 4ull * rows * cols;
      }
    }
    if (payload.size() < need)
      throw Error(ErrorCode::kTruncated,
                  "checkpoint: payload has " + std::to_string(payload.size()) +
                      " bytes, metadata implies " + std::to_string(need));
    if (payload.size() != need || meta.value("payload_bytes", need) != need)
      inconsistent("payload length " + std::to_string(payload.size()) +
                   " does not match metadata (" + std::to_string(need) + ")");

    std::size_t off = 0;
    auto read_tensor = [&](std::size_t rows, std::size_t cols) {
      Matrix t(rows, cols);
      for (double& v : t.data()) {
        v = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(get_le(payload, off, 4))));
        off += 4;
      }
      return t;
    };

    for (std::size_t i = 0; i < expected.size(); ++i) {
      const json& t = tensors[i];
      const std::string name = t.at("name").get<std::string>();
      if (name != expected[i].name)
        inconsistent("tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                     expected[i].name + "'");
      const std::size_t rows = t.at("shape").at(0).get<std::size_t>();
      const std::size_t cols = t.at("shape").at(1).get<std::size_t>();
      const std::string kind = t.at("kind").get<std::string>();
      if (expected[i].role != "projection") {
        if (kind != "dense") inconsistent("'" + name + "' must be dense");
        *expected[i].tensors[0] = read_tensor(rows, cols);
        continue;
      }
      Projection* p = m.find_projection(name);
      p->cls = layer_class_from_string(t.value("class", std::string()));
      if (kind == "dense") {
        p->weight = DenseWeight{read_tensor(rows, cols)};
      } else if (kind == "factored") {
        const std::size_t r = t.at("rank").get<std::size_t>();
        if (r == 0 || r > std::min(rows, cols))
          inconsistent("'" + name + "' rank " + std::to_string(r) + " out of range");
        FactoredWeight f;
        f.a = read_tensor(rows, r);
        f.b = read_tensor(r, cols);
        f.split = t.value("sv_split", std::string("symmetric"));
        p->weight = std::move(f);
      } else {
        inconsistent("'" + name + "' has unknown kind '" + kind + "'");
      }
    }

    // Structural shape checks against the config.
    const auto& c = m.config;
    auto want = [&](const Matrix& x, std::size_t r, std::size_t cc, const std::string& what) {
      if (x.rows() != r || x.cols() != cc) inconsistent(what + " has wrong shape");
    };
    want(m.embed, c.vocab, c.d_model, "embed");
    want(m.final_norm, 1, c.d_model, "norm");
    want(m.head, c.vocab, c.d_model, "lm_head");
    for (const auto& b : m.blocks) {
      want(b.attn_norm, 1, c.d_model, "input_layernorm");
      want(b.mlp_norm, 1, c.d_model, "post_attention_layernorm");
      for (const auto* p : b.projections()) {
        const bool mlp_in = p->kind == ProjKind::kGate || p->kind == ProjKind::kUp;
        const std::size_t rows = mlp_in ? c.d_ff : c.d_model;
        const std::size_t cols = p->kind == ProjKind::kDown ? c.d_ff : c.d_model;
        if (p->rows() != rows || p->cols() != cols) inconsistent(p->name + " has wrong shape");
      }
    }

    const auto stored = static_cast<std::uint32_t>(meta.at("crc32").get<std::uint64_t>());
    const std::uint32_t actual = crc32(payload);
    if (stored != actual) {
      result.checksum_ok = false;
      std::ostringstream os;
      os << "checkpoint payload CRC32 mismatch (stored " << std::hex << stored
         << ", computed " << actual << ")";
      result.warning = os.str();
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kFormat, std::string("checkpoint metadata: ") + ex.what());
  }
  return result;
}

void save_file(const Model& model, const std::filesystem::path& path) {
  const auto bytes = save(model);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kFormat, "cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorCode::kFormat, "write failed: " + path.string());
}

LoadResult load_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kFormat, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return load(bytes);
}

Model rounded_to_storage(const Model& model) {
  Model m = model;
  for (auto& ref : parameters(m))
    for (double& v : ref.value->data()) v = static_cast<double>(static_cast<float>(v));
  return m;
}

Model fold_adapters(const Model& model) {
  Model m = model;
  for (auto* p : m.projections()) {
    if (!p->lora) continue;
    const LoraAdapter& ad = *p->lora;
    if (auto* d = std::get_if<DenseWeight>(&p->weight)) {
      add_matmul(d->w, ad.u, ad.v, ad.scale);
    } else {
      auto& f = std::get<FactoredWeight>(p->weight);
      const std::size_t r = f.a.cols(), rl = ad.u.cols();
      Matrix a(f.a.rows(), r + rl), b(r + rl, f.b.cols());
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < r; ++j) a(i, j) = f.a(i, j);
        for (std::size_t j = 0; j < rl; ++j) a(i, r + j) = ad.scale * ad.u(i, j);
      }
      for (std::size_t j = 0; j < b.cols(); ++j) {
        for (std::size_t i = 0; i < r; ++i) b(i, j) = f.b(i, j);
        for (std::size_t i = 0; i < rl; ++i) b(r + i, j) = ad.v(i, j);
      }
      if ((r + rl) * (a.rows() + b.cols()) < a.rows() * b.cols())
        p->weight = FactoredWeight{std::move(a), std::move(b), "adapter_folded"};
      else
        p->weight = DenseWeight{matmul(a, b)};
    }
    p->lora.reset();
  }
  return m;
}

std::size_t stored_element_count(const Model& model) {
  Model copy = model;
  std::size_t n = 0;
  for (const auto& r : records(copy))
    for (const Matrix* m : r.tensors) n += m->size();
  return n;
}

}  // namespace welore

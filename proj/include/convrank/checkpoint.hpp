#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include "convrank/common.hpp"
#include "convrank/model.hpp"
#include "convrank/vocab.hpp"

namespace convrank {

// Checkpoint (kind 4): header carries the architecture, shapes, the
// fingerprints of the vocabulary the model was trained against, the training
// seed and the feature mask; the payload is every parameter tensor as f32,
// row-major, in declared order (ngram table, user table, network layers,
// heads). Loading verifies fingerprints and exact payload length.
inline void save_checkpoint(std::ostream& out, const ModelParams<float>& m,
                            const Vocabulary& vocab) {
  BinWriter w(out);
  w.header(FileKind::checkpoint);
  w.u8(std::uint8_t(m.arch()));
  w.u32(std::uint32_t(m.d));
  w.u16(std::uint16_t(m.hidden.size()));
  for (std::size_t h : m.hidden) w.u32(std::uint32_t(h));
  w.u64(vocab.ngram_fingerprint());
  w.u64(vocab.user_fingerprint());
  w.u64(m.seed);
  std::uint8_t flags = (m.mask.use_context ? 1 : 0) | (m.mask.use_author ? 2 : 0);
  w.u8(flags);
  std::uint64_t total = 0;
  for_each_param(m, [&](std::span<const float> s) { total += s.size(); });
  w.u64(total);
  for_each_param(m, [&](std::span<const float> s) {
    for (float v : s) w.f32(v);
  });
}

inline ModelParams<float> load_checkpoint(std::istream& in, const Vocabulary& vocab) {
  BinReader r(in);
  r.expect_header(FileKind::checkpoint);
  Arch arch = Arch(r.u8());
  if (arch != Arch::single && arch != Arch::multi) throw DataError("bad architecture tag");
  std::uint32_t d = r.u32();
  std::uint16_t n_hidden = r.u16();
  std::vector<std::size_t> hidden(n_hidden);
  for (auto& h : hidden) h = r.u32();
  std::uint64_t ngram_fp = r.u64();
  std::uint64_t user_fp = r.u64();
  std::uint64_t seed = r.u64();
  std::uint8_t flags = r.u8();

  if (ngram_fp != vocab.ngram_fingerprint())
    throw DataError("checkpoint was built against a different ngram vocabulary");
  if (user_fp != vocab.user_fingerprint())
    throw DataError("checkpoint was built against a different user population");

  FeatureMask mask;
  mask.use_context = (flags & 1) != 0;
  mask.use_author = (flags & 2) != 0;

  ModelParams<float> m =
      init_model<float>(arch, vocab.ngram_size(), vocab.user_size(), d, hidden, seed, mask);

  std::uint64_t declared = r.u64();
  std::uint64_t expected = 0;
  for_each_param(m, [&](std::span<const float> s) { expected += s.size(); });
  if (declared != expected)
    throw DataError("checkpoint payload length does not match declared shapes");
  for_each_param(m, [&](std::span<float> s) {
    for (auto& v : s) v = r.f32();
  });
  if (!r.at_eof()) throw DataError("trailing bytes after checkpoint payload");
  return m;
}

// User vector file (kind 5), the output of new-user adaptation.
inline void save_user_vector(std::ostream& out, std::span<const float> vec) {
  BinWriter w(out);
  w.header(FileKind::user_vector);
  w.u32(std::uint32_t(vec.size()));
  for (float v : vec) w.f32(v);
}

inline std::vector<float> load_user_vector(std::istream& in) {
  BinReader r(in);
  r.expect_header(FileKind::user_vector);
  std::uint32_t d = r.u32();
  std::vector<float> vec(d);
  for (auto& v : vec) v = r.f32();
  return vec;
}

}  // namespace convrank

#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "dagankit/checkpoint.hpp"
#include "dagankit/rng.hpp"

using namespace dagankit;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/dagankit_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

ParamStore make_store(const std::string& prefix, std::uint64_t seed) {
  ParamStore store(prefix);
  Rng rng(seed);
  store.add("w", {2, 3}, he_normal(rng, 3, 6));
  store.add("b", {3}, {0.25, -1.5, 3.75});
  return store;
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("checkpoint round trip is an f32 fixpoint") {
  TempFile a("round_a.ckpt"), b("round_b.ckpt");
  ParamStore store = make_store("net", 5);
  CheckpointMeta meta{123456789ull, 0xfeedbeefcafef00dull, 42};
  save_checkpoint(a.path, {&store}, meta);

  Checkpoint ckpt = load_checkpoint(a.path);
  CHECK(ckpt.meta.seed == meta.seed);
  CHECK(ckpt.meta.config_hash == meta.config_hash);
  CHECK(ckpt.meta.steps == meta.steps);

  // Loaded values are the f32 truncations of the originals.
  ParamStore loaded = make_store("net", 99);  // different values, same shapes
  apply_checkpoint(ckpt, {&loaded});
  for (size_t i = 0; i < store.entries().size(); ++i) {
    const auto& orig = store.entries()[i].value;
    const auto& got = loaded.entries()[i].value;
    for (size_t k = 0; k < orig.size(); ++k) {
      CHECK(got[k] == static_cast<double>(static_cast<float>(orig[k])));
    }
  }

  // Save of the loaded state reproduces the file byte for byte.
  save_checkpoint(b.path, {&loaded}, meta);
  CHECK(slurp(a.path) == slurp(b.path));
}

TEST_CASE("corrupted and malformed files are rejected") {
  TempFile t("corrupt.ckpt");
  ParamStore store = make_store("net", 7);
  save_checkpoint(t.path, {&store}, CheckpointMeta{1, 2, 3});

  auto bytes = slurp(t.path);

  {  // truncation breaks the CRC
    std::ofstream f(t.path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size() - 5));
  }
  CHECK_THROWS_AS(load_checkpoint(t.path), CheckpointError);

  {  // flipped payload byte
    auto bad = bytes;
    bad[bytes.size() / 2] ^= 0x40;
    std::ofstream f(t.path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bad.data()), static_cast<std::streamsize>(bad.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(t.path), CheckpointError);

  {  // wrong magic
    auto bad = bytes;
    bad[0] = 'X';
    std::ofstream f(t.path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bad.data()), static_cast<std::streamsize>(bad.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(t.path), CheckpointError);
}

TEST_CASE("empty net list produces a valid count-0 file") {
  TempFile t("empty.ckpt");
  save_checkpoint(t.path, {}, CheckpointMeta{});
  auto bytes = slurp(t.path);
  CHECK(bytes.size() == 16);  // magic + version + count + crc
  Checkpoint ckpt = load_checkpoint(t.path);
  CHECK(ckpt.entries.empty());
}

TEST_CASE("unknown and missing names are rejected on load") {
  TempFile t("names.ckpt");
  ParamStore store = make_store("net", 11);
  save_checkpoint(t.path, {&store}, CheckpointMeta{1, 1, 1});
  Checkpoint ckpt = load_checkpoint(t.path);

  ParamStore other("other");  // no matching names at all
  Rng rng(3);
  other.add("w", {2, 3}, he_normal(rng, 3, 6));
  CHECK_THROWS_AS(apply_checkpoint(ckpt, {&other}), CheckpointError);

  ParamStore bigger = make_store("net", 11);
  bigger.add("extra", {1}, {0.0});  // param not present in the file
  CHECK_THROWS_AS(apply_checkpoint(ckpt, {&bigger}), CheckpointError);
}

// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "grip/binary_io.hpp"
#include "grip/checkpoint.hpp"
#include "grip/constraints.hpp"
#include "grip/errors.hpp"
#include "oracles.hpp"

using namespace grip;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* name) {
  const fs::path p = fs::temp_directory_path() / ("grip_test_" + std::string(name));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("checkpoint header layout") {
  const MoENetwork net = MoENetwork::random({2, 3, 4, 2, 5}, 1);
  const auto bytes = encode_checkpoint(net);
  REQUIRE(bytes.size() == 8 + 5 * 4 + 8 * (2 * (3 * 4 + 3 * (16 + 4)) + 5 * 4 + 5));
  CHECK(std::memcmp(bytes.data(), "GRIPMOE1", 8) == 0);
  io::ByteReader r(bytes);
  r.expect_magic("GRIPMOE1");
  CHECK(r.u32() == 2);  // L
  CHECK(r.u32() == 3);  // E
  CHECK(r.u32() == 4);  // d
  CHECK(r.u32() == 2);  // k
  CHECK(r.u32() == 5);  // C
  CHECK(r.f64() == net.layers[0].router.theta(0, 0));
}

TEST_CASE("checkpoint round trip is bit exact") {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const MoENetwork net = MoENetwork::random({3, 4, 6, 2, 3}, seed, 2.0);
    const MoENetwork back = decode_checkpoint(encode_checkpoint(net));
    CHECK(encode_checkpoint(back) == encode_checkpoint(net));
    CHECK(back.layers[2].experts[3].weight == net.layers[2].experts[3].weight);
    CHECK(back.readout.bias == net.readout.bias);
  }
  const fs::path dir = scratch_dir("ckpt");
  const MoENetwork net = MoENetwork::random({1, 2, 3, 1, 2}, 4);
  save_checkpoint(dir / "a.gripmoe", net);
  CHECK(encode_checkpoint(load_checkpoint(dir / "a.gripmoe")) == encode_checkpoint(net));
  fs::remove_all(dir);
}

TEST_CASE("malformed checkpoints are rejected") {
  const auto good = encode_checkpoint(MoENetwork::random({1, 2, 3, 1, 2}, 4));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);
  auto nan = good;
  const double q = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(nan.data() + 28, &q, 8);
  CHECK_THROWS(decode_checkpoint(nan));
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.gripmoe"), std::runtime_error);
}

TEST_CASE("retain cache round trip and layout") {
  const MoENetwork net = MoENetwork::random({2, 4, 5, 2, 3}, 3);
  std::mt19937_64 rng(3);
  const Matrix inputs = oracle::random_matrix(9, 5, rng);
  const RetainCache cache = capture_retain_cache(net, inputs);
  CHECK(cache.samples == 9);
  CHECK(cache.reps[0].rows() == 5);
  CHECK(cache.reps[0].cols() == 9);
  CHECK(cache.reps[0].column(4) == Vector(inputs.row(4).begin(), inputs.row(4).end()));
  const auto bytes = encode_cache(cache);
  CHECK(std::memcmp(bytes.data(), "GRIPCACH", 8) == 0);
  io::ByteReader r(bytes);
  r.expect_magic("GRIPCACH");
  CHECK(r.u32() == 1);  // version
  CHECK(r.u32() == 2);  // L
  CHECK(r.u32() == 5);  // d
  CHECK(r.u32() == 9);  // N
  CHECK(r.u32() == 4);  // E
  CHECK(r.u32() == 2);  // k
  const RetainCache back = decode_cache(bytes);
  CHECK(encode_cache(back) == bytes);
  CHECK(back.selections == cache.selections);

  auto v2 = bytes;
  v2[8] = 2;
  CHECK_THROWS_AS(decode_cache(v2), FormatError);
  auto cut = bytes;
  cut.resize(cut.size() - 1);
  CHECK_THROWS_AS(decode_cache(cut), FormatError);

  const fs::path dir = scratch_dir("cache");
  save_cache(dir / "r.gripcach", cache);
  CHECK(encode_cache(load_cache(dir / "r.gripcach")) == bytes);
  fs::remove_all(dir);
}

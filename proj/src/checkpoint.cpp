// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/checkpoint.hpp"

#include "grip/binary_io.hpp"

namespace grip {

namespace {
constexpr std::string_view kMagic = "GRIPMOE1";
}

std::vector<std::uint8_t> encode_checkpoint(const MoENetwork& net) {
  net.validate();
  const NetworkShape s = net.shape();
  io::ByteWriter w;
  w.magic(kMagic);
  w.u32(static_cast<std::uint32_t>(s.layers));
  w.u32(static_cast<std::uint32_t>(s.experts));
  w.u32(static_cast<std::uint32_t>(s.dim));
  w.u32(static_cast<std::uint32_t>(s.k));
  w.u32(static_cast<std::uint32_t>(s.classes));
  for (const auto& layer : net.layers) {
    w.f64s(layer.router.theta.data());
    for (const auto& ex : layer.experts) {
      w.f64s(ex.weight.data());
      w.f64s(ex.bias);
    }
  }
  w.f64s(net.readout.weight.data());
  w.f64s(net.readout.bias);
  return w.take();
}

MoENetwork decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kMagic);
  NetworkShape s;
  s.layers = r.u32();
  s.experts = r.u32();
  s.dim = r.u32();
  s.k = r.u32();
  s.classes = r.u32();
  if (s.dim == 0 || s.classes == 0) throw FormatError("checkpoint: zero dimension");
  const std::size_t d = s.dim;
  const std::size_t expected =
      8 * (s.layers * (s.experts * d + s.experts * (d * d + d)) + s.classes * d + s.classes);
  if (r.remaining() != expected)
    throw FormatError("checkpoint: payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                      std::to_string(expected));

  MoENetwork net;
  try {
    net.layers.resize(s.layers);
    for (auto& layer : net.layers) {
      layer.k = s.k;
      layer.router.theta = Matrix(s.experts, d, r.f64s(s.experts * d));
      layer.experts.resize(s.experts);
      for (auto& ex : layer.experts) {
        ex.weight = Matrix(d, d, r.f64s(d * d));
        ex.bias = r.f64s(d);
      }
    }
    net.readout.weight = Matrix(s.classes, d, r.f64s(s.classes * d));
    net.readout.bias = r.f64s(s.classes);
    net.validate();
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return net;
}

void save_checkpoint(const std::filesystem::path& path, const MoENetwork& net) {
  io::write_file(path, encode_checkpoint(net));
}

MoENetwork load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace grip

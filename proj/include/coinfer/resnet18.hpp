#pragma once

// Builder for the ResNet18 topology adapted to 32x32 CIFAR images (3x3 stem,
// no max-pool, four stages of two basic blocks). Used to generate the
// bundled profile fixture.

#include <cstdint>
#include <string>

#include "coinfer/model_profile.hpp"

namespace coinfer {

namespace detail {

struct ProfileBuilder {
  ModelProfile profile;
  std::uint64_t c = 0, h = 0, w = 0;

  void conv(const std::string& name, std::uint64_t c_out, std::uint64_t kernel, std::uint64_t stride,
            bool splittable = false) {
    const std::uint64_t h_out = h / stride, w_out = w / stride;
    profile.layers.push_back({name, LayerKind::conv, conv_flops(kernel, c, c_out, h_out, w_out),
                              kernel * kernel * c * c_out, {c_out, h_out, w_out}, kDefaultFeatureBits,
                              splittable, std::nullopt});
    c = c_out;
    h = h_out;
    w = w_out;
  }
  std::uint64_t elements() const { return c * h * w; }
  void bn(const std::string& name) {
    profile.layers.push_back({name, LayerKind::bn, 2 * elements(), 2 * c, {c, h, w}, kDefaultFeatureBits,
                              false, std::nullopt});
  }
  void relu(const std::string& name, bool splittable = false) {
    profile.layers.push_back({name, LayerKind::activation, elements(), 0, {c, h, w}, kDefaultFeatureBits,
                              splittable, std::nullopt});
  }
  void add(const std::string& name) {
    profile.layers.push_back({name, LayerKind::add, elements(), 0, {c, h, w}, kDefaultFeatureBits, false,
                              std::nullopt});
  }
  void basic_block(const std::string& prefix, std::uint64_t c_out, std::uint64_t stride) {
    const std::uint64_t c_in = c, h_in = h, w_in = w;
    conv(prefix + ".conv1", c_out, 3, stride);
    bn(prefix + ".bn1");
    relu(prefix + ".relu1");
    conv(prefix + ".conv2", c_out, 3, 1);
    bn(prefix + ".bn2");
    if (stride != 1 || c_in != c_out) {
      const std::uint64_t c_mid = c, h_mid = h, w_mid = w;
      c = c_in;
      h = h_in;
      w = w_in;
      conv(prefix + ".shortcut.conv", c_out, 1, stride);
      bn(prefix + ".shortcut.bn");
      c = c_mid;
      h = h_mid;
      w = w_mid;
    }
    add(prefix + ".add");
    relu(prefix + ".relu2", true);
  }
};

} // namespace detail

inline ModelProfile resnet18_cifar10_profile() {
  detail::ProfileBuilder b;
  b.profile.name = "resnet18_cifar10";
  b.profile.input_shape = {3, 32, 32};
  b.profile.input_bits_per_element = 8;
  b.c = 3;
  b.h = 32;
  b.w = 32;

  b.conv("conv1", 64, 3, 1, true);
  b.bn("bn1");
  b.relu("relu1", true);

  const std::uint64_t widths[] = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage) {
    for (int block = 0; block < 2; ++block) {
      const std::uint64_t stride = (stage > 0 && block == 0) ? 2 : 1;
      b.basic_block("layer" + std::to_string(stage + 1) + "." + std::to_string(block), widths[stage], stride);
    }
  }

  // Global average pool over 4x4 followed by the 10-way classifier.
  b.profile.layers.push_back({"avgpool", LayerKind::pool, b.elements(), 0, {b.c}, kDefaultFeatureBits, true,
                              std::nullopt});
  b.profile.layers.push_back({"fc", LayerKind::fc, 2 * b.c * 10 + 10, b.c * 10 + 10, {10}, kDefaultFeatureBits,
                              true, std::nullopt});
  validate(b.profile);
  return b.profile;
}

} // namespace coinfer

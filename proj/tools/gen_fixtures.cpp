// Writes the bundled ResNet-18/CIFAR-10 profile and the example planner
// inputs into a directory (default: ./profiles).

#include <array>
#include <filesystem>
#include <iostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "coinfer/planner.hpp"
#include "coinfer/report_io.hpp"
#include "coinfer/resnet18.hpp"

using namespace coinfer;

namespace {

EnvironmentProfile edge_environment(const ModelProfile& profile) {
  EnvironmentProfile env;
  env.device_flops_per_s = 24e9;
  env.server_flops_per_s = 13.45e12;
  env.device_memory_bytes = 1'000'000'000;
  // 40% of the dense parameters fill the device.
  env.memory_overhead_factor = calibrate_memory_overhead(profile, env.device_memory_bytes, 0.4);
  env.channel = ChannelSpec::fixed(320'000);
  return env;
}

// Synthetic table: a sparsity penalty plus reduction and quantization
// penalties. Shallow features are less abstract, so compressing them costs
// more accuracy than compressing deep ones.
AccuracyModel accuracy_table(const ModelProfile& profile) {
  std::vector<double> splits;
  for (auto k : valid_splits(profile)) splits.push_back(static_cast<double>(k));
  auto depth_scale = [&](double k) {
    const double frac = k / static_cast<double>(profile.size());
    if (frac <= 0.25) return 3.0;
    if (frac <= 0.5) return 1.5;
    if (frac <= 0.75) return 1.0;
    return 0.5;
  };
  const std::vector<double> sparsity = {0.0, 0.2, 1.0 / 3.0, 0.5};
  const std::vector<double> sparsity_pen = {0.0, 0.004, 0.01, 0.03};
  const std::vector<double> dims = {0, 256, 512, 1024, 2048};
  const std::vector<double> dim_pen = {0.0, 0.012, 0.007, 0.004, 0.002};
  const std::vector<double> bits = {0, 2, 4, 8};
  const std::vector<double> bit_pen = {0.0, 0.015, 0.005, 0.001};
  std::vector<double> values;
  for (double k : splits) {
    for (std::size_t s = 0; s < sparsity.size(); ++s) {
      for (std::size_t d = 0; d < dims.size(); ++d) {
        for (std::size_t b = 0; b < bits.size(); ++b) {
          values.push_back(0.95 - sparsity_pen[s] - depth_scale(k) * (dim_pen[d] + bit_pen[b]));
        }
      }
    }
  }
  return AccuracyModel(0.93, {splits, sparsity, dims, bits}, values);
}

nlohmann::ordered_json grid() {
  nlohmann::ordered_json j;
  j["splits"] = "all";
  j["sparsities"] = {0.0, 0.2, 1.0 / 3.0, 0.5};
  auto codecs = nlohmann::ordered_json::array();
  codecs.push_back(nullptr);
  for (std::uint64_t d : {256, 512, 1024, 2048}) {
    for (std::uint32_t b : {2, 4, 8}) {
      // Dense projection from a 1024-element input.
      codecs.push_back(codec_to_json({d, b, 2 * 1024 * d}));
    }
  }
  j["codecs"] = codecs;
  return j;
}

void write_json(const std::filesystem::path& p, const nlohmann::ordered_json& j) {
  write_file_atomic(p, j.dump(2) + "\n");
  std::cout << "wrote " << p.string() << "\n";
}

} // namespace

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "profiles";
  std::filesystem::create_directories(dir);
  const auto profile = resnet18_cifar10_profile();
  write_json(dir / "resnet18_cifar10.json", profile_to_json(profile));
  write_json(dir / "raspberry_pi3_edge.json", environment_to_json(edge_environment(profile)));
  write_json(dir / "resnet18_cifar10_accuracy.json", accuracy_to_json(accuracy_table(profile)));
  write_json(dir / "resnet18_cifar10_grid.json", grid());
  return 0;
}

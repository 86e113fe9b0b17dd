#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "blockforge/features.hpp"

namespace blockforge {

// Encoder-decoder with skip connections. The four input channels (psi, phi,
// obstacles, targets) are average-pooled by `stem` to the internal resolution
// r = d / stem; the encoder then halves r `levels` times. The head predicts a
// correction at resolution r which is upsampled and added to phi, so the
// output is phi + up(head).
struct Architecture {
  int d = 64;
  int base_width = 16;
  int levels = 2;
  int stem = 4;
  double leak = 0.1;

  // Default layout with the internal resolution held at 16.
  static Architecture for_resolution(int d);

  int internal_resolution() const { return d / stem; }
  int width(int level) const { return level == 0 ? base_width : 2 * base_width; }
  // Throws ShapeError if d is not divisible by stem * 2^levels.
  void validate() const;
  std::string describe() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size() const;
};

std::vector<ParamSpec> parameter_manifest(const Architecture& arch);

template <class T>
struct BasicParams {
  Architecture arch;
  std::vector<ParamSpec> manifest;
  std::vector<T> values;

  std::size_t count() const { return values.size(); }
  bool all_finite() const;
};

using ApproximatorParams = BasicParams<float>;

template <class T>
BasicParams<T> init_params(std::uint64_t seed, const Architecture& arch);

template <class To, class From>
BasicParams<To> cast_params(const BasicParams<From>& p) {
  BasicParams<To> out{p.arch, p.manifest, {}};
  out.values.assign(p.values.begin(), p.values.end());
  return out;
}

struct NetInput {
  const FeatureImage* psi = nullptr;
  const FeatureImage* phi = nullptr;
  const TaskImage* xi = nullptr;
};

// Throws ShapeError when an input does not match the architecture's d.
template <class T>
std::vector<FeatureImage> forward_psi(const BasicParams<T>& params, const std::vector<NetInput>& batch);

FeatureImage forward_psi(const ApproximatorParams& params, const FeatureImage& psi, const FeatureImage& phi,
                         const TaskImage& xi);

// Q = forward_psi(...)^T rho for every candidate phi sharing one state and
// task. Evaluated in batches without materializing the output images.
template <class T>
std::vector<double> candidate_q_values(const BasicParams<T>& params, const FeatureImage& psi, const TaskImage& xi,
                                       const std::vector<FeatureImage>& phis, const RewardField& rho);

// Mean over the batch of ||Y - Psi||^2. When `grad` is given it receives
// dL/dtheta (resized to the parameter count).
template <class T>
double loss_and_gradient(const BasicParams<T>& params, const std::vector<NetInput>& batch,
                         const std::vector<FeatureImage>& targets, std::type_identity_t<std::vector<T>>* grad);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

template <class T>
void adam_update(std::vector<T>& values, const std::vector<T>& grad, double lr, AdamState& state,
                 const AdamConfig& cfg = {});

}  // namespace blockforge

// Copyright 2026 The ktune Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Bundled device surrogates. Each profile is a log-additive model over the log2 of the work-group
// and pixels-per-thread sizes plus memory-flag effects, expanded into explicit terms for the
// space at hand.
//
//   cpu-like  groups of about 8 work-items, image memory without local memory is ~3.5x slower,
//             interleaved reads hurt.
//   gpu-a     wants 32 wide groups of about 128 threads, local and image memory both help.
//   gpu-b     wants 64 wide groups of about 128 threads and little work per thread, max 256
//             threads, image memory hurts and local memory helps a lot.

#include <algorithm>
#include <cmath>
#include <functional>

#include "ktune/errors.hpp"
#include "ktune/measurement.hpp"

namespace ktune {
namespace {

double log2v(Value v) { return std::log2(static_cast<double>(std::max<Value>(v, 1))); }
double above(double x, double t) { return std::max(0.0, x - t); }
double sq(double x) { return x * x; }

bool has_param(const ParamSpace& space, const std::string& name) {
  const auto& ps = space.params();
  return std::any_of(ps.begin(), ps.end(), [&](const ParamDef& p) { return p.name == name; });
}

class ProfileBuilder {
 public:
  explicit ProfileBuilder(const ParamSpace& space) : space_(space) {}

  // log-factor of a single parameter as a function of its value
  void single(const std::string& name, const std::function<double(Value)>& log_factor) {
    if (!has_param(space_, name)) return;
    for (Value v : space_.params()[space_.param_index(name)].values) emit({name}, {v}, log_factor(v));
  }

  void pair(const std::string& a, const std::string& b, const std::function<double(Value, Value)>& log_factor) {
    if (!has_param(space_, a) || !has_param(space_, b)) return;
    for (Value va : space_.params()[space_.param_index(a)].values)
      for (Value vb : space_.params()[space_.param_index(b)].values) emit({a, b}, {va, vb}, log_factor(va, vb));
  }

  // Multiplies by `factor` when the flag is 1.
  void flag(const std::string& name, double factor) {
    single(name, [factor](Value v) { return v == 1 ? std::log(factor) : 0.0; });
  }

  void flags(const std::string& a, const std::string& b, Value va, Value vb, double factor) {
    pair(a, b, [=](Value x, Value y) { return x == va && y == vb ? std::log(factor) : 0.0; });
  }

  std::vector<SurrogateTerm> take() { return std::move(terms_); }

 private:
  void emit(std::vector<std::string> params, std::vector<Value> match, double log_factor) {
    if (std::abs(log_factor) < 1e-12) return;
    terms_.push_back({std::move(params), std::move(match), std::exp(log_factor)});
  }

  const ParamSpace& space_;
  std::vector<SurrogateTerm> terms_;
};

void require_common(const ParamSpace& space) {
  for (const char* name : {"wg_x", "wg_y", "ppt_x", "ppt_y"})
    if (!has_param(space, name))
      throw SpecError(std::string("bundled surrogates need parameter '") + name + "' in space '" + space.name() + "'");
}

SurrogateSpec cpu_like(const ParamSpace& space) {
  ProfileBuilder b(space);
  b.single("wg_x", [](Value v) { return 0.03 * sq(log2v(v) - 2); });
  b.pair("wg_x", "wg_y", [](Value x, Value y) { return 0.06 * sq(log2v(x) + log2v(y) - 3); });
  b.pair("ppt_x", "ppt_y", [](Value x, Value y) {
    return 0.03 * sq(log2v(x) + log2v(y) - 5) + 0.01 * sq(log2v(x) - log2v(y));
  });
  b.pair("wg_x", "ppt_x", [](Value w, Value p) { return 0.02 * sq(above(log2v(w) + log2v(p), 8)); });

  if (has_param(space, "use_image")) {  // convolution
    b.flags("use_image", "use_local", 1, 0, 3.5);
    b.flag("use_local", 1.1);
    b.flag("padding", 1.01);
    b.flag("interleaved", 1.25);
    b.flag("unroll", 0.85);
  }
  if (has_param(space, "image_data")) {  // raycasting
    b.flags("image_data", "local_tf", 1, 0, 2.5);
    b.flag("image_tf", 1.1);
    b.flag("constant_tf", 0.95);
    b.single("unroll", [](Value v) { return v > 1 ? 0.04 * std::pow(log2v(v) - 2, 2) - 0.15 : 0.0; });
  }
  if (has_param(space, "image_left")) {  // stereo
    b.flags("image_left", "local_left", 1, 0, 1.8);
    b.flags("image_right", "local_right", 1, 0, 1.8);
    b.single("unroll_disparity", [](Value v) { return -0.08 * log2v(v); });
    b.single("unroll_diff_x", [](Value v) { return -0.05 * log2v(v); });
    b.single("unroll_diff_y", [](Value v) { return -0.05 * log2v(v); });
  }

  SurrogateSpec spec;
  spec.name = "cpu-like";
  spec.base_time = 0.02;
  spec.terms = b.take();
  spec.noise_cv = 0.03;
  spec.invalid_rules = default_device_rules(space);
  spec.seed = 0x437075;
  return spec;
}

SurrogateSpec gpu_a(const ParamSpace& space) {
  ProfileBuilder b(space);
  b.single("wg_x", [](Value v) { return 0.05 * sq(log2v(v) - 5); });
  b.single("wg_y", [](Value v) { return 0.04 * sq(log2v(v) - 2); });
  b.pair("wg_x", "wg_y", [](Value x, Value y) { return 0.04 * sq(log2v(x) + log2v(y) - 7); });
  b.pair("ppt_x", "ppt_y", [](Value x, Value y) {
    return 0.03 * sq(log2v(x) + log2v(y) - 3) + 0.015 * sq(log2v(x) - log2v(y));
  });

  if (has_param(space, "use_image")) {  // convolution
    b.flag("use_local", 0.8);
    b.flag("use_image", 0.85);
    b.flags("use_image", "use_local", 1, 1, 1.1);
    b.flag("padding", 1.02);
    b.flags("padding", "use_local", 1, 1, 0.92);
    b.pair("interleaved", "wg_x", [](Value i, Value w) { return i == 1 ? -0.05 * (log2v(w) - 3) : 0.0; });
    b.flag("unroll", 0.9);
  }
  if (has_param(space, "image_data")) {  // raycasting
    b.flag("image_data", 0.75);
    b.flag("image_tf", 0.9);
    b.flag("local_tf", 0.95);
    b.flag("constant_tf", 0.85);
    b.flags("local_tf", "constant_tf", 1, 1, 1.1);
    b.pair("interleaved", "wg_y", [](Value i, Value w) { return i == 1 ? 0.03 * (log2v(w) - 2) : 0.0; });
    b.single("unroll", [](Value v) { return 0.06 * std::pow(log2v(v) - 2, 2) - 0.1 * std::min(log2v(v), 2.0); });
  }
  if (has_param(space, "image_left")) {  // stereo
    b.flag("image_left", 0.85);
    b.flag("image_right", 0.85);
    b.flag("local_left", 0.8);
    b.flag("local_right", 0.8);
    b.single("unroll_disparity", [](Value v) { return 0.05 * std::pow(log2v(v) - 1, 2); });
    b.single("unroll_diff_x", [](Value v) { return -0.04 * log2v(v); });
    b.single("unroll_diff_y", [](Value v) { return -0.04 * log2v(v); });
  }

  SurrogateSpec spec;
  spec.name = "gpu-a";
  spec.base_time = 0.005;
  spec.terms = b.take();
  spec.noise_cv = 0.05;
  spec.invalid_rules = default_device_rules(space);
  spec.seed = 0x475055;
  return spec;
}

SurrogateSpec gpu_b(const ParamSpace& space) {
  ProfileBuilder b(space);
  b.single("wg_x", [](Value v) { return 0.06 * sq(log2v(v) - 6); });
  b.single("wg_y", [](Value v) { return 0.05 * sq(log2v(v) - 1); });
  b.pair("wg_x", "wg_y", [](Value x, Value y) { return 0.04 * sq(log2v(x) + log2v(y) - 7); });
  b.pair("ppt_x", "ppt_y", [](Value x, Value y) {
    return 0.04 * sq(log2v(x) + log2v(y) - 2) + 0.02 * sq(log2v(x) - log2v(y));
  });

  if (has_param(space, "use_image")) {  // convolution
    b.flag("use_local", 0.7);
    b.flag("use_image", 1.15);
    b.flags("use_image", "use_local", 1, 1, 0.9);
    b.flags("padding", "use_local", 1, 1, 0.95);
    b.flag("interleaved", 0.9);
    b.flag("unroll", 1.05);
  }
  if (has_param(space, "image_data")) {  // raycasting
    b.flag("image_data", 0.8);
    b.flag("image_tf", 1.1);
    b.flag("local_tf", 0.85);
    b.flag("constant_tf", 0.95);
    b.flag("interleaved", 0.9);
    b.single("unroll", [](Value v) { return -0.08 * log2v(v) + 0.02 * std::pow(log2v(v), 2); });
  }
  if (has_param(space, "image_left")) {  // stereo
    b.flag("image_left", 1.1);
    b.flag("image_right", 1.1);
    b.flag("local_left", 0.75);
    b.flag("local_right", 0.75);
    b.flags("local_left", "local_right", 1, 1, 1.15);
    b.single("unroll_disparity", [](Value v) { return 0.03 * log2v(v); });
    b.single("unroll_diff_x", [](Value v) { return 0.04 * std::pow(log2v(v) - 1, 2); });
    b.single("unroll_diff_y", [](Value v) { return 0.04 * std::pow(log2v(v) - 1, 2); });
  }

  SurrogateSpec spec;
  spec.name = "gpu-b";
  spec.base_time = 0.004;
  spec.terms = b.take();
  spec.noise_cv = 0.05;
  spec.invalid_rules = default_device_rules(space);
  // smaller device: 256 work-items per group
  spec.invalid_rules.front().bound = 256;
  spec.seed = 0x414d44;
  return spec;
}

}  // namespace

std::vector<std::string> builtin_surrogate_names() { return {"cpu-like", "gpu-a", "gpu-b"}; }

SurrogateSpec builtin_surrogate(const std::string& profile, const ParamSpace& space) {
  require_common(space);
  if (profile == "cpu-like") return cpu_like(space);
  if (profile == "gpu-a") return gpu_a(space);
  if (profile == "gpu-b") return gpu_b(space);
  throw LookupError("unknown surrogate profile '" + profile + "'");
}

}  // namespace ktune

#pragma once

// Minimal dense-network engine: ReLU hidden layers, linear or softmax head,
// exact reverse-mode gradients and Adam. Everything is 64-bit and
// deterministic given the seed and call sequence.

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mbom/common.hpp"
#include "nlohmann/json.hpp"

namespace mbom::nn {

enum class Head { linear, softmax };

inline std::string head_name(Head h) { return h == Head::linear ? "linear" : "softmax"; }

inline Head head_from_name(const std::string& s) {
  if (s == "linear") return Head::linear;
  if (s == "softmax") return Head::softmax;
  throw ConfigError("unknown output head: " + s);
}

// Widest layer the stack-buffered forward pass supports.
inline constexpr int kMaxWidth = 256;

struct NetSpec {
  std::vector<int> layer_sizes;
  Head output_head = Head::linear;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  int num_weight_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

  void validate() const {
    if (layer_sizes.size() < 2) throw ConfigError("NetSpec needs at least 2 layers");
    for (int n : layer_sizes) {
      if (n < 1) throw ConfigError("NetSpec layer sizes must be >= 1");
      if (n > kMaxWidth) throw ConfigError("NetSpec layer size exceeds supported width");
    }
  }

  int param_count() const {
    int total = 0;
    for (int l = 0; l + 1 < static_cast<int>(layer_sizes.size()); ++l)
      total += layer_sizes[l + 1] * (layer_sizes[l] + 1);
    return total;
  }

  // Offset of layer l's weight block in the flat parameter array; biases
  // follow the weights of the same layer.
  int weight_offset(int l) const {
    int off = 0;
    for (int i = 0; i < l; ++i) off += layer_sizes[i + 1] * (layer_sizes[i] + 1);
    return off;
  }
  int bias_offset(int l) const { return weight_offset(l) + layer_sizes[l + 1] * layer_sizes[l]; }

  bool operator==(const NetSpec&) const = default;
};

struct ParamSet {
  Vec flat;
  std::uint64_t version = 0;

  double& at(int i) { return flat[i]; }
  double at(int i) const { return flat[i]; }
};

inline ParamSet zero_params(const NetSpec& spec) {
  spec.validate();
  return ParamSet{Vec(spec.param_count(), 0.0), 0};
}

// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for weights and biases,
// keeping initial softmax heads near-uniform.
inline ParamSet init_params(const NetSpec& spec, Rng& rng) {
  ParamSet p = zero_params(spec);
  for (int l = 0; l < spec.num_weight_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes[l]));
    const int woff = spec.weight_offset(l);
    const int count = spec.layer_sizes[l + 1] * (spec.layer_sizes[l] + 1);
    for (int i = 0; i < count; ++i) p.flat[woff + i] = rng.uniform(-bound, bound);
  }
  return p;
}

inline ParamSet clone_params(const ParamSet& params) { return params; }

inline void softmax_inplace(double* z, int n) {
  double mx = z[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, z[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    z[i] = std::exp(z[i] - mx);
    sum += z[i];
  }
  for (int i = 0; i < n; ++i) z[i] /= sum;
}

inline Vec softmax(std::span<const double> z) {
  Vec out(z.begin(), z.end());
  softmax_inplace(out.data(), static_cast<int>(out.size()));
  return out;
}

namespace detail {
inline void affine(const NetSpec& spec, const ParamSet& params, int l,
                   const double* in, double* out) {
  const int nin = spec.layer_sizes[l];
  const int nout = spec.layer_sizes[l + 1];
  const double* w = params.flat.data() + spec.weight_offset(l);
  const double* b = params.flat.data() + spec.bias_offset(l);
  for (int i = 0; i < nout; ++i) {
    double acc = b[i];
    const double* row = w + static_cast<std::size_t>(i) * nin;
    for (int j = 0; j < nin; ++j) acc += row[j] * in[j];
    out[i] = acc;
  }
}
}  // namespace detail

// Allocation-free forward pass into a caller-owned output vector.
inline void forward_into(const NetSpec& spec, const ParamSet& params,
                         std::span<const double> input, Vec& out) {
  if (static_cast<int>(input.size()) != spec.input_size())
    throw ConfigError("forward: input size mismatch");
  if (static_cast<int>(params.flat.size()) != spec.param_count())
    throw ConfigError("forward: params do not match spec");
  std::array<double, kMaxWidth> buf_a{};
  std::array<double, kMaxWidth> buf_b{};
  std::copy(input.begin(), input.end(), buf_a.begin());
  double* cur = buf_a.data();
  double* nxt = buf_b.data();
  const int L = spec.num_weight_layers();
  for (int l = 0; l < L; ++l) {
    detail::affine(spec, params, l, cur, nxt);
    const int nout = spec.layer_sizes[l + 1];
    if (l + 1 < L) {
      for (int i = 0; i < nout; ++i) nxt[i] = nxt[i] > 0.0 ? nxt[i] : 0.0;
    } else if (spec.output_head == Head::softmax) {
      softmax_inplace(nxt, nout);
    }
    std::swap(cur, nxt);
  }
  out.assign(cur, cur + spec.output_size());
}

inline Vec forward(const NetSpec& spec, const ParamSet& params, std::span<const double> input) {
  Vec out;
  forward_into(spec, params, input, out);
  return out;
}

// Per-layer activations recorded by a traced forward pass, consumed by
// backward(). `preact` holds z values, `act` the post-ReLU values
// (act[0] is the input, the last act is the head output).
struct Trace {
  std::vector<Vec> preact;
  std::vector<Vec> act;
  bool valid = false;

  const Vec& output() const { return act.back(); }
};

inline const Vec& forward_traced(const NetSpec& spec, const ParamSet& params,
                                 std::span<const double> input, Trace& trace) {
  if (static_cast<int>(input.size()) != spec.input_size())
    throw ConfigError("forward: input size mismatch");
  if (static_cast<int>(params.flat.size()) != spec.param_count())
    throw ConfigError("forward: params do not match spec");
  const int L = spec.num_weight_layers();
  trace.preact.resize(L);
  trace.act.resize(L + 1);
  trace.act[0].assign(input.begin(), input.end());
  for (int l = 0; l < L; ++l) {
    const int nout = spec.layer_sizes[l + 1];
    trace.preact[l].resize(nout);
    detail::affine(spec, params, l, trace.act[l].data(), trace.preact[l].data());
    trace.act[l + 1] = trace.preact[l];
    if (l + 1 < L) {
      for (double& v : trace.act[l + 1]) v = v > 0.0 ? v : 0.0;
    } else if (spec.output_head == Head::softmax) {
      softmax_inplace(trace.act[l + 1].data(), nout);
    }
  }
  trace.valid = true;
  return trace.act.back();
}

// Gradients of a scalar loss with respect to all parameters, given the
// loss gradient at the network output. Accumulates into `grads` so a
// minibatch can sum per-sample gradients.
inline void backward_accumulate(const NetSpec& spec, const ParamSet& params, const Trace& trace,
                                std::span<const double> output_grad, ParamSet& grads) {
  if (!trace.valid || trace.act.empty() ||
      static_cast<int>(trace.act[0].size()) != spec.input_size())
    throw UsageError("backward: no forward trace for this input");
  if (static_cast<int>(output_grad.size()) != spec.output_size())
    throw ConfigError("backward: output_grad size mismatch");
  if (static_cast<int>(grads.flat.size()) != spec.param_count())
    throw ConfigError("backward: gradient buffer shape mismatch");

  const int L = spec.num_weight_layers();
  std::array<double, kMaxWidth> delta{};
  std::array<double, kMaxWidth> delta_prev{};

  // Head: map d loss / d output to d loss / d preactivation.
  const int nout = spec.output_size();
  if (spec.output_head == Head::softmax) {
    const Vec& p = trace.act[L];
    double dot = 0.0;
    for (int i = 0; i < nout; ++i) dot += output_grad[i] * p[i];
    for (int i = 0; i < nout; ++i) delta[i] = p[i] * (output_grad[i] - dot);
  } else {
    std::copy(output_grad.begin(), output_grad.end(), delta.begin());
  }

  for (int l = L - 1; l >= 0; --l) {
    const int nin = spec.layer_sizes[l];
    const int nl = spec.layer_sizes[l + 1];
    double* gw = grads.flat.data() + spec.weight_offset(l);
    double* gb = grads.flat.data() + spec.bias_offset(l);
    const Vec& a = trace.act[l];
    for (int i = 0; i < nl; ++i) {
      const double d = delta[i];
      gb[i] += d;
      double* row = gw + static_cast<std::size_t>(i) * nin;
      for (int j = 0; j < nin; ++j) row[j] += d * a[j];
    }
    if (l > 0) {
      const double* w = params.flat.data() + spec.weight_offset(l);
      const Vec& z = trace.preact[l - 1];
      for (int j = 0; j < nin; ++j) delta_prev[j] = 0.0;
      for (int i = 0; i < nl; ++i) {
        const double d = delta[i];
        const double* row = w + static_cast<std::size_t>(i) * nin;
        for (int j = 0; j < nin; ++j) delta_prev[j] += d * row[j];
      }
      for (int j = 0; j < nin; ++j) delta[j] = z[j] > 0.0 ? delta_prev[j] : 0.0;
    }
  }
}

inline ParamSet backward(const NetSpec& spec, const ParamSet& params, const Trace& trace,
                         std::span<const double> output_grad) {
  ParamSet grads = zero_params(spec);
  backward_accumulate(spec, params, trace, output_grad, grads);
  return grads;
}

// Adam accumulators; shapes follow the ParamSet they update.
struct OptState {
  Vec m;
  Vec v;
  long step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline OptState make_opt(const NetSpec& spec, double learning_rate) {
  OptState o;
  o.m.assign(spec.param_count(), 0.0);
  o.v.assign(spec.param_count(), 0.0);
  o.learning_rate = learning_rate;
  return o;
}

inline void opt_step(ParamSet& params, const ParamSet& grads, OptState& opt) {
  if (params.flat.size() != grads.flat.size() || params.flat.size() != opt.m.size())
    throw ConfigError("opt_step: shape mismatch");
  if (!all_finite(grads.flat)) throw TrainingError("opt_step: non-finite gradient");
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < params.flat.size(); ++i) {
    const double g = grads.flat[i];
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
    const double mhat = opt.m[i] / bc1;
    const double vhat = opt.v[i] / bc2;
    params.flat[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.eps);
  }
  params.version += 1;
  if (!all_finite(params.flat)) throw TrainingError("opt_step: parameters became non-finite");
}

// A spec together with its parameters; the unit most modules pass around.
struct Net {
  NetSpec spec;
  ParamSet params;

  Vec operator()(std::span<const double> x) const { return forward(spec, params, x); }
};

inline Net make_net(std::vector<int> sizes, Head head, Rng& rng) {
  Net n;
  n.spec.layer_sizes = std::move(sizes);
  n.spec.output_head = head;
  n.spec.validate();
  n.params = init_params(n.spec, rng);
  return n;
}

// --- checkpoint format -----------------------------------------------------
//
// Line 1: a single-line JSON header {"spec": {...}, "version": v,
// "data_offset": o} terminated by '\n', padded with spaces up to
// data_offset. From data_offset: param_count little-endian IEEE-754
// doubles. Round-trips bit-exactly.

inline void write_f64_le(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

inline void save_checkpoint(const std::string& path, const NetSpec& spec, const ParamSet& params) {
  nlohmann::json hdr;
  hdr["spec"] = {{"layers", spec.layer_sizes}, {"head", head_name(spec.output_head)}};
  hdr["version"] = params.version;
  std::string text = hdr.dump();
  // data_offset includes the header, a newline and padding to an 8-byte
  // boundary; the offset itself changes the header length, so fix it.
  std::size_t offset = 0;
  for (int iter = 0; iter < 4; ++iter) {
    hdr["data_offset"] = offset;
    text = hdr.dump();
    std::size_t want = ((text.size() + 1 + 7) / 8) * 8;
    if (want == offset) break;
    offset = want;
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write checkpoint: " + path);
  os << text;
  for (std::size_t i = text.size(); i + 1 < offset; ++i) os.put(' ');
  os.put('\n');
  for (double d : params.flat) write_f64_le(os, d);
  if (!os) throw ConfigError("checkpoint write failed: " + path);
}

struct Checkpoint {
  NetSpec spec;
  ParamSet params;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read checkpoint: " + path);
  std::string line;
  std::getline(is, line);
  nlohmann::json hdr = nlohmann::json::parse(line, nullptr, true);
  Checkpoint ck;
  ck.spec.layer_sizes = hdr.at("spec").at("layers").get<std::vector<int>>();
  ck.spec.output_head = head_from_name(hdr.at("spec").at("head").get<std::string>());
  ck.spec.validate();
  ck.params.version = hdr.at("version").get<std::uint64_t>();
  const std::size_t offset = hdr.at("data_offset").get<std::size_t>();
  is.seekg(static_cast<std::streamoff>(offset));
  ck.params.flat.resize(ck.spec.param_count());
  for (double& d : ck.params.flat) d = read_f64_le(is);
  if (!is) throw ConfigError("checkpoint truncated: " + path);
  return ck;
}

}  // namespace mbom::nn

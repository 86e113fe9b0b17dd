#include "blockforge/nn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "blockforge/errors.hpp"

namespace blockforge {

void Architecture::validate() const {
  if (d < kMinResolution) throw ShapeError("architecture d must be at least 16");
  if (base_width < 1 || levels < 1 || stem < 1) throw ShapeError("architecture widths and levels must be positive");
  const int div = stem << levels;
  if (d % div != 0) {
    throw ShapeError("d = " + std::to_string(d) + " is not divisible by stem * 2^levels = " + std::to_string(div));
  }
  if (!(leak >= 0.0 && leak < 1.0)) throw ShapeError("leak must be in [0, 1)");
}

Architecture Architecture::for_resolution(int d) {
  Architecture a;
  a.d = d;
  a.stem = std::max(1, d / 16);
  return a;
}

std::string Architecture::describe() const {
  std::ostringstream out;
  out << "unet d=" << d << " width=" << base_width << " levels=" << levels << " stem=" << stem << " leak=" << leak;
  return out.str();
}

std::size_t ParamSpec::size() const {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  return n;
}

namespace {

struct ConvSpec {
  std::string name;
  int cin;
  int cout;
  int k;
};

std::vector<ConvSpec> conv_layers(const Architecture& a) {
  std::vector<ConvSpec> out;
  out.push_back({"enc0", 4, a.width(0), 3});
  for (int k = 1; k <= a.levels; ++k) out.push_back({"enc" + std::to_string(k), a.width(k - 1), a.width(k), 3});
  out.push_back({"mid", a.width(a.levels), a.width(a.levels), 3});
  for (int k = a.levels - 1; k >= 1; --k) {
    out.push_back({"dec" + std::to_string(k), a.width(k + 1) + a.width(k), a.width(k), 3});
  }
  out.push_back({"dec0", a.width(1) + a.width(0), a.width(0), 1});
  out.push_back({"head", a.width(0), 1, 1});
  return out;
}

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Mat<T> im2col(const Mat<T>& in, int n, int res) {
  const int hw = res * res;
  Mat<T> col(in.rows() * 9, static_cast<Eigen::Index>(n) * hw);
  for (Eigen::Index c = 0; c < in.rows(); ++c) {
    const T* src = in.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col.row((c * 3 + ky) * 3 + kx).data();
        for (int s = 0; s < n; ++s) {
          const T* img = src + static_cast<std::size_t>(s) * hw;
          T* out = dst + static_cast<std::size_t>(s) * hw;
          for (int y = 0; y < res; ++y) {
            const int sy = y + ky - 1;
            T* row = out + y * res;
            if (sy < 0 || sy >= res) {
              std::fill(row, row + res, T(0));
              continue;
            }
            const T* srow = img + sy * res;
            for (int x = 0; x < res; ++x) {
              const int sx = x + kx - 1;
              row[x] = (sx >= 0 && sx < res) ? srow[sx] : T(0);
            }
          }
        }
      }
    }
  }
  return col;
}

template <class T>
Mat<T> col2im(const Mat<T>& col, int channels, int n, int res) {
  const int hw = res * res;
  Mat<T> out = Mat<T>::Zero(channels, static_cast<Eigen::Index>(n) * hw);
  for (int c = 0; c < channels; ++c) {
    T* dst = out.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col.row((c * 3 + ky) * 3 + kx).data();
        for (int s = 0; s < n; ++s) {
          T* img = dst + static_cast<std::size_t>(s) * hw;
          const T* in = src + static_cast<std::size_t>(s) * hw;
          for (int y = 0; y < res; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= res) continue;
            for (int x = 0; x < res; ++x) {
              const int sx = x + kx - 1;
              if (sx >= 0 && sx < res) img[sy * res + sx] += in[y * res + x];
            }
          }
        }
      }
    }
  }
  return out;
}

template <class T>
Mat<T> pool2(const Mat<T>& in, int n, int res) {
  const int half = res / 2;
  Mat<T> out(in.rows(), static_cast<Eigen::Index>(n) * half * half);
  for (Eigen::Index c = 0; c < in.rows(); ++c) {
    const T* src = in.row(c).data();
    T* dst = out.row(c).data();
    for (int s = 0; s < n; ++s) {
      const T* img = src + static_cast<std::size_t>(s) * res * res;
      T* o = dst + static_cast<std::size_t>(s) * half * half;
      for (int y = 0; y < half; ++y) {
        for (int x = 0; x < half; ++x) {
          const T* p = img + 2 * y * res + 2 * x;
          o[y * half + x] = T(0.25) * (p[0] + p[1] + p[res] + p[res + 1]);
        }
      }
    }
  }
  return out;
}

template <class T>
Mat<T> pool2_backward(const Mat<T>& dout, int n, int res) {
  const int half = res / 2;
  Mat<T> din(dout.rows(), static_cast<Eigen::Index>(n) * res * res);
  for (Eigen::Index c = 0; c < dout.rows(); ++c) {
    const T* src = dout.row(c).data();
    T* dst = din.row(c).data();
    for (int s = 0; s < n; ++s) {
      const T* g = src + static_cast<std::size_t>(s) * half * half;
      T* img = dst + static_cast<std::size_t>(s) * res * res;
      for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) img[y * res + x] = T(0.25) * g[(y / 2) * half + x / 2];
      }
    }
  }
  return din;
}

template <class T>
Mat<T> up2(const Mat<T>& in, int n, int res) {
  const int twice = res * 2;
  Mat<T> out(in.rows(), static_cast<Eigen::Index>(n) * twice * twice);
  for (Eigen::Index c = 0; c < in.rows(); ++c) {
    const T* src = in.row(c).data();
    T* dst = out.row(c).data();
    for (int s = 0; s < n; ++s) {
      const T* img = src + static_cast<std::size_t>(s) * res * res;
      T* o = dst + static_cast<std::size_t>(s) * twice * twice;
      for (int y = 0; y < twice; ++y) {
        for (int x = 0; x < twice; ++x) o[y * twice + x] = img[(y / 2) * res + x / 2];
      }
    }
  }
  return out;
}

template <class T>
Mat<T> up2_backward(const Mat<T>& dout, int n, int res) {
  const int twice = res * 2;
  Mat<T> din = Mat<T>::Zero(dout.rows(), static_cast<Eigen::Index>(n) * res * res);
  for (Eigen::Index c = 0; c < dout.rows(); ++c) {
    const T* src = dout.row(c).data();
    T* dst = din.row(c).data();
    for (int s = 0; s < n; ++s) {
      const T* g = src + static_cast<std::size_t>(s) * twice * twice;
      T* img = dst + static_cast<std::size_t>(s) * res * res;
      for (int y = 0; y < twice; ++y) {
        for (int x = 0; x < twice; ++x) img[(y / 2) * res + x / 2] += g[y * twice + x];
      }
    }
  }
  return din;
}

template <class T>
Mat<T> vcat(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

template <class T>
class Network {
 public:
  explicit Network(const BasicParams<T>& p) : p_(p), layers_(conv_layers(p.arch)) {
    std::size_t off = 0;
    for (const ConvSpec& l : layers_) {
      w_off_.push_back(off);
      off += static_cast<std::size_t>(l.cout) * l.cin * l.k * l.k;
      b_off_.push_back(off);
      off += static_cast<std::size_t>(l.cout);
    }
    if (off != p.values.size()) throw ShapeError("parameter count does not match the architecture");
    cache_.resize(layers_.size());
  }

  // input: 4 x (n * r * r). Returns the head output 1 x (n * r * r).
  const Mat<T>& forward(const Mat<T>& input, int n) {
    n_ = n;
    const Architecture& a = p_.arch;
    const int r = a.internal_resolution();
    const int L = a.levels;
    std::size_t li = 0;
    enc_.assign(L + 1, nullptr);
    enc_[0] = &conv(li++, input, r, true);
    for (int k = 1; k <= L; ++k) enc_[k] = &conv(li++, pool2(*enc_[k - 1], n, r >> (k - 1)), r >> k, true);
    const Mat<T>* prev = &conv(li++, *enc_[L], r >> L, true);
    for (int k = L - 1; k >= 1; --k) {
      prev = &conv(li++, vcat(up2(*prev, n, r >> (k + 1)), *enc_[k]), r >> k, true);
    }
    prev = &conv(li++, vcat(up2(*prev, n, r >> 1), *enc_[0]), r, true);
    return conv(li++, *prev, r, false);
  }

  // dhead: gradient of the loss w.r.t. the head output. Accumulates into grad.
  void backward(const Mat<T>& dhead, std::vector<T>& grad) {
    const Architecture& a = p_.arch;
    const int r = a.internal_resolution();
    const int L = a.levels;
    const int n = n_;
    std::size_t li = layers_.size() - 1;
    std::vector<Mat<T>> denc(L + 1);
    for (int k = 0; k <= L; ++k) denc[k] = Mat<T>::Zero(enc_[k]->rows(), enc_[k]->cols());

    Mat<T> d = conv_backward(li--, dhead, r, false, grad);
    d = conv_backward(li--, d, r, true, grad);
    const Eigen::Index up_rows = a.width(1);
    denc[0] += d.bottomRows(d.rows() - up_rows);
    Mat<T> dprev = up2_backward<T>(d.topRows(up_rows), n, r >> 1);
    for (int k = 1; k <= L - 1; ++k) {
      d = conv_backward(li--, dprev, r >> k, true, grad);
      const Eigen::Index rows = a.width(k + 1);
      denc[k] += d.bottomRows(d.rows() - rows);
      dprev = up2_backward<T>(d.topRows(rows), n, r >> (k + 1));
    }
    denc[L] += conv_backward(li--, dprev, r >> L, true, grad);
    for (int k = L; k >= 1; --k) {
      d = conv_backward(li--, denc[k], r >> k, true, grad);
      denc[k - 1] += pool2_backward(d, n, r >> (k - 1));
    }
    conv_backward(li, denc[0], r, true, grad);
  }

 private:
  struct Cache {
    Mat<T> col;
    Mat<T> z;
    Mat<T> a;
  };

  const Mat<T>& conv(std::size_t li, const Mat<T>& in, int res, bool act) {
    const ConvSpec& l = layers_[li];
    Cache& c = cache_[li];
    c.col = l.k == 3 ? im2col(in, n_, res) : in;
    Eigen::Map<const Mat<T>> w(p_.values.data() + w_off_[li], l.cout, static_cast<Eigen::Index>(l.cin) * l.k * l.k);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(p_.values.data() + b_off_[li], l.cout);
    c.z.noalias() = w * c.col;
    c.z.colwise() += b;
    if (act) {
      const T leak = static_cast<T>(p_.arch.leak);
      c.a = c.z.unaryExpr([leak](T v) { return v > T(0) ? v : leak * v; });
      return c.a;
    }
    return c.z;
  }

  Mat<T> conv_backward(std::size_t li, const Mat<T>& da, int res, bool act, std::vector<T>& grad) {
    const ConvSpec& l = layers_[li];
    Cache& c = cache_[li];
    Mat<T> dz;
    if (act) {
      const T leak = static_cast<T>(p_.arch.leak);
      dz = da.binaryExpr(c.z, [leak](T g, T z) { return z > T(0) ? g : leak * g; });
    } else {
      dz = da;
    }
    const Eigen::Index kk = static_cast<Eigen::Index>(l.cin) * l.k * l.k;
    Eigen::Map<const Mat<T>> w(p_.values.data() + w_off_[li], l.cout, kk);
    Eigen::Map<Mat<T>> gw(grad.data() + w_off_[li], l.cout, kk);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb(grad.data() + b_off_[li], l.cout);
    gw.noalias() += dz * c.col.transpose();
    gb += dz.rowwise().sum();
    Mat<T> dcol = w.transpose() * dz;
    if (l.k == 3) return col2im(dcol, l.cin, n_, res);
    return dcol;
  }

  const BasicParams<T>& p_;
  std::vector<ConvSpec> layers_;
  std::vector<std::size_t> w_off_;
  std::vector<std::size_t> b_off_;
  std::vector<Cache> cache_;
  std::vector<const Mat<T>*> enc_;
  int n_ = 0;
};

void check_input(const Architecture& a, const NetInput& in) {
  if (!in.psi || !in.phi || !in.xi) throw ShapeError("network input has a missing channel");
  if (in.psi->d() != a.d || in.phi->d() != a.d || in.xi->obstacles.d() != a.d || in.xi->targets.d() != a.d) {
    throw ShapeError("network input resolution does not match the architecture (d = " + std::to_string(a.d) + ")");
  }
}

template <class T>
void pool_into(const FeatureImage& img, int stem, T* dst) {
  const int d = img.d();
  const int r = d / stem;
  const double inv = 1.0 / (stem * stem);
  for (int y = 0; y < r; ++y) {
    for (int x = 0; x < r; ++x) {
      double s = 0.0;
      for (int dy = 0; dy < stem; ++dy) {
        for (int dx = 0; dx < stem; ++dx) s += img.at(x * stem + dx, y * stem + dy);
      }
      dst[y * r + x] = static_cast<T>(s * inv);
    }
  }
}

template <class T>
Mat<T> make_input(const Architecture& a, const std::vector<NetInput>& batch, std::size_t begin, std::size_t end) {
  const int r = a.internal_resolution();
  const std::size_t hw = static_cast<std::size_t>(r) * r;
  const int n = static_cast<int>(end - begin);
  Mat<T> in(4, static_cast<Eigen::Index>(n) * hw);
  for (std::size_t s = begin; s < end; ++s) {
    check_input(a, batch[s]);
    const std::size_t off = (s - begin) * hw;
    pool_into(*batch[s].psi, a.stem, in.row(0).data() + off);
    pool_into(*batch[s].phi, a.stem, in.row(1).data() + off);
    pool_into(batch[s].xi->obstacles, a.stem, in.row(2).data() + off);
    pool_into(batch[s].xi->targets, a.stem, in.row(3).data() + off);
  }
  return in;
}

// Full-resolution output = phi + nearest-upsampled head.
template <class T>
FeatureImage assemble_output(const Architecture& a, const Mat<T>& head, int s, const FeatureImage& phi) {
  const int r = a.internal_resolution();
  const T* h = head.data() + static_cast<std::size_t>(s) * r * r;
  FeatureImage out = phi;
  for (int j = 0; j < a.d; ++j) {
    for (int i = 0; i < a.d; ++i) out.at(i, j) += static_cast<double>(h[(j / a.stem) * r + i / a.stem]);
  }
  return out;
}

constexpr std::size_t kChunk = 64;

}  // namespace

template <class T>
bool BasicParams<T>::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

std::vector<ParamSpec> parameter_manifest(const Architecture& arch) {
  arch.validate();
  std::vector<ParamSpec> out;
  std::size_t off = 0;
  for (const ConvSpec& l : conv_layers(arch)) {
    ParamSpec w{l.name + ".weight", {l.cout, l.cin, l.k, l.k}, off};
    off += w.size();
    ParamSpec b{l.name + ".bias", {l.cout}, off};
    off += b.size();
    out.push_back(std::move(w));
    out.push_back(std::move(b));
  }
  return out;
}

template <class T>
BasicParams<T> init_params(std::uint64_t seed, const Architecture& arch) {
  BasicParams<T> p{arch, parameter_manifest(arch), {}};
  const ParamSpec& last = p.manifest.back();
  p.values.assign(last.offset + last.size(), T(0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double gain = std::sqrt(2.0 / (1.0 + arch.leak * arch.leak));
  for (const ParamSpec& spec : p.manifest) {
    if (spec.shape.size() != 4) continue;
    const int fan_in = spec.shape[1] * spec.shape[2] * spec.shape[3];
    double stddev = gain / std::sqrt(static_cast<double>(fan_in));
    if (spec.name == "head.weight") stddev *= 0.1;
    for (std::size_t k = 0; k < spec.size(); ++k) p.values[spec.offset + k] = static_cast<T>(stddev * normal(rng));
  }
  return p;
}

template <class T>
std::vector<FeatureImage> forward_psi(const BasicParams<T>& params, const std::vector<NetInput>& batch) {
  params.arch.validate();
  Network<T> net(params);
  std::vector<FeatureImage> out;
  out.reserve(batch.size());
  for (std::size_t begin = 0; begin < batch.size(); begin += kChunk) {
    const std::size_t end = std::min(batch.size(), begin + kChunk);
    const Mat<T>& head = net.forward(make_input<T>(params.arch, batch, begin, end), static_cast<int>(end - begin));
    for (std::size_t s = begin; s < end; ++s) {
      out.push_back(assemble_output(params.arch, head, static_cast<int>(s - begin), *batch[s].phi));
    }
  }
  return out;
}

FeatureImage forward_psi(const ApproximatorParams& params, const FeatureImage& psi, const FeatureImage& phi,
                         const TaskImage& xi) {
  return forward_psi(params, std::vector<NetInput>{{&psi, &phi, &xi}}).front();
}

template <class T>
std::vector<double> candidate_q_values(const BasicParams<T>& params, const FeatureImage& psi, const TaskImage& xi,
                                       const std::vector<FeatureImage>& phis, const RewardField& rho) {
  const Architecture& a = params.arch;
  a.validate();
  if (rho.field.d() != a.d) throw ShapeError("reward field resolution does not match the architecture");
  const int r = a.internal_resolution();
  // rho summed over each stem block: <up(h), rho> = <h, pooled>.
  std::vector<double> pooled(static_cast<std::size_t>(r) * r, 0.0);
  for (int j = 0; j < a.d; ++j) {
    for (int i = 0; i < a.d; ++i) pooled[(j / a.stem) * r + i / a.stem] += rho.field.at(i, j);
  }
  std::vector<NetInput> batch;
  batch.reserve(phis.size());
  for (const FeatureImage& phi : phis) batch.push_back({&psi, &phi, &xi});

  Network<T> net(params);
  std::vector<double> q(phis.size());
  for (std::size_t begin = 0; begin < batch.size(); begin += kChunk) {
    const std::size_t end = std::min(batch.size(), begin + kChunk);
    const Mat<T>& head = net.forward(make_input<T>(a, batch, begin, end), static_cast<int>(end - begin));
    for (std::size_t s = begin; s < end; ++s) {
      const T* h = head.data() + (s - begin) * pooled.size();
      double v = inner(phis[s], rho.field);
      for (std::size_t k = 0; k < pooled.size(); ++k) v += static_cast<double>(h[k]) * pooled[k];
      q[s] = v;
    }
  }
  return q;
}

template <class T>
double loss_and_gradient(const BasicParams<T>& params, const std::vector<NetInput>& batch,
                         const std::vector<FeatureImage>& targets, std::type_identity_t<std::vector<T>>* grad) {
  const Architecture& a = params.arch;
  a.validate();
  if (batch.size() != targets.size()) throw ShapeError("batch and target counts differ");
  if (batch.empty()) throw ShapeError("empty batch");
  const int r = a.internal_resolution();
  const int n = static_cast<int>(batch.size());
  const double inv_b = 1.0 / n;

  Network<T> net(params);
  const Mat<T>& head = net.forward(make_input<T>(a, batch, 0, batch.size()), n);
  Mat<T> dhead = Mat<T>::Zero(1, head.cols());
  double loss = 0.0;
  for (int s = 0; s < n; ++s) {
    if (targets[s].d() != a.d) throw ShapeError("target resolution does not match the architecture");
    const FeatureImage out = assemble_output(a, head, s, *batch[s].phi);
    T* dh = dhead.data() + static_cast<std::size_t>(s) * r * r;
    for (int j = 0; j < a.d; ++j) {
      for (int i = 0; i < a.d; ++i) {
        const double diff = out.at(i, j) - targets[s].at(i, j);
        loss += diff * diff;
        dh[(j / a.stem) * r + i / a.stem] += static_cast<T>(2.0 * diff * inv_b);
      }
    }
  }
  loss *= inv_b;
  if (grad) {
    grad->assign(params.values.size(), T(0));
    net.backward(dhead, *grad);
  }
  return loss;
}

template <class T>
void adam_update(std::vector<T>& values, const std::vector<T>& grad, double lr, AdamState& state,
                 const AdamConfig& cfg) {
  if (grad.size() != values.size()) throw ShapeError("gradient size does not match the parameters");
  if (state.m.size() != values.size()) {
    state.m.assign(values.size(), 0.0);
    state.v.assign(values.size(), 0.0);
    state.t = 0;
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double g = static_cast<double>(grad[k]);
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
    const double step = lr * (state.m[k] / c1) / (std::sqrt(state.v[k] / c2) + cfg.eps);
    values[k] = static_cast<T>(static_cast<double>(values[k]) - step);
  }
}

template struct BasicParams<float>;
template struct BasicParams<double>;
template BasicParams<float> init_params<float>(std::uint64_t, const Architecture&);
template BasicParams<double> init_params<double>(std::uint64_t, const Architecture&);
template std::vector<FeatureImage> forward_psi<float>(const BasicParams<float>&, const std::vector<NetInput>&);
template std::vector<FeatureImage> forward_psi<double>(const BasicParams<double>&, const std::vector<NetInput>&);
template std::vector<double> candidate_q_values<float>(const BasicParams<float>&, const FeatureImage&,
                                                       const TaskImage&, const std::vector<FeatureImage>&,
                                                       const RewardField&);
template std::vector<double> candidate_q_values<double>(const BasicParams<double>&, const FeatureImage&,
                                                        const TaskImage&, const std::vector<FeatureImage>&,
                                                        const RewardField&);
template double loss_and_gradient<float>(const BasicParams<float>&, const std::vector<NetInput>&,
                                         const std::vector<FeatureImage>&, std::vector<float>*);
template double loss_and_gradient<double>(const BasicParams<double>&, const std::vector<NetInput>&,
                                          const std::vector<FeatureImage>&, std::vector<double>*);
template void adam_update<float>(std::vector<float>&, const std::vector<float>&, double, AdamState&,
                                 const AdamConfig&);
template void adam_update<double>(std::vector<double>&, const std::vector<double>&, double, AdamState&,
                                  const AdamConfig&);

}  // namespace blockforge

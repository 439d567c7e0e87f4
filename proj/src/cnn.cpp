#include "voicetriage/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "voicetriage/csv.hpp"
#include "voicetriage/error.hpp"
#include "voicetriage/rng.hpp"

namespace vt {

void CnnConfig::validate() const {
  if (filters.empty()) fail(ErrorKind::InvalidArgument, "cnn: need at least one block");
  for (int f : filters) {
    if (f < 1) fail(ErrorKind::InvalidArgument, "cnn: filter counts must be positive");
  }
  const std::size_t div = std::size_t{1} << filters.size();
  if (input_rows == 0 || input_cols == 0 || input_rows % div != 0 || input_cols % div != 0) {
    fail(ErrorKind::InvalidArgument, "cnn: input sides must be positive multiples of 2^blocks");
  }
  if (max_epochs < 1 || patience < 0 || batch_size < 1) {
    fail(ErrorKind::InvalidArgument, "cnn: bad epoch, patience or batch settings");
  }
  if (!(learning_rate > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(adam_eps > 0.0) || !(bn_momentum > 0.0 && bn_momentum <= 1.0) || !(bn_eps > 0.0)) {
    fail(ErrorKind::InvalidArgument, "cnn: bad optimizer or batch-norm constants");
  }
}

bool CnnConfig::is_reference() const {
  return filters == std::vector<int>{32, 64, 128} && input_rows == 128 && input_cols == 256;
}

std::size_t CnnConfig::flat_dim() const {
  const std::size_t div = std::size_t{1} << filters.size();
  return static_cast<std::size_t>(filters.back()) * (input_rows / div) * (input_cols / div);
}

CnnConfig CnnConfig::tiny() {
  CnnConfig c;
  c.filters = {2, 2, 2};
  c.input_rows = 16;
  c.input_cols = 16;
  return c;
}

std::vector<std::array<std::size_t, 3>> cnn_block_shapes(const CnnConfig& cfg) {
  std::vector<std::array<std::size_t, 3>> shapes;
  std::size_t h = cfg.input_rows;
  std::size_t w = cfg.input_cols;
  for (int f : cfg.filters) {
    h /= 2;
    w /= 2;
    shapes.push_back({static_cast<std::size_t>(f), h, w});
  }
  return shapes;
}

template <class T>
std::vector<std::span<T>> BasicCnnModel<T>::parameters() {
  std::vector<std::span<T>> out;
  for (auto& b : blocks) {
    out.emplace_back(b.weight);
    out.emplace_back(b.bias);
    out.emplace_back(b.gamma);
    out.emplace_back(b.beta);
  }
  out.emplace_back(head_weight);
  out.emplace_back(head_bias);
  return out;
}

template <class T>
std::vector<std::span<const T>> BasicCnnModel<T>::parameters() const {
  std::vector<std::span<const T>> out;
  for (const auto& b : blocks) {
    out.emplace_back(b.weight);
    out.emplace_back(b.bias);
    out.emplace_back(b.gamma);
    out.emplace_back(b.beta);
  }
  out.emplace_back(head_weight);
  out.emplace_back(head_bias);
  return out;
}

template <class T>
BasicCnnModel<T> BasicCnnModel<T>::zeros_like() const {
  BasicCnnModel z = *this;
  for (auto& b : z.blocks) {
    for (auto* v : {&b.weight, &b.bias, &b.gamma, &b.beta, &b.running_mean, &b.running_var}) {
      std::fill(v->begin(), v->end(), T{0});
    }
  }
  std::fill(z.head_weight.begin(), z.head_weight.end(), T{0});
  std::fill(z.head_bias.begin(), z.head_bias.end(), T{0});
  return z;
}

template <class T>
std::size_t BasicCnnModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

template <class T>
BasicCnnModel<T> cnn_init(const CnnConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  BasicCnnModel<T> m;
  m.config = cfg;
  int in = 1;
  for (int out : cfg.filters) {
    typename BasicCnnModel<T>::Block b;
    b.in_channels = in;
    b.out_channels = out;
    const double limit = std::sqrt(6.0 / (9.0 * in));
    b.weight.resize(static_cast<std::size_t>(out) * static_cast<std::size_t>(in) * 9);
    for (auto& w : b.weight) w = static_cast<T>(rng.uniform(-limit, limit));
    b.bias.assign(static_cast<std::size_t>(out), T{0});
    b.gamma.assign(static_cast<std::size_t>(out), T{1});
    b.beta.assign(static_cast<std::size_t>(out), T{0});
    b.running_mean.assign(static_cast<std::size_t>(out), T{0});
    b.running_var.assign(static_cast<std::size_t>(out), T{1});
    m.blocks.push_back(std::move(b));
    in = out;
  }
  const std::size_t d = cfg.flat_dim();
  const double limit = std::sqrt(6.0 / static_cast<double>(d));
  m.head_weight.resize(2 * d);
  for (auto& w : m.head_weight) w = static_cast<T>(rng.uniform(-limit, limit));
  m.head_bias.assign(2, T{0});
  return m;
}

namespace {

// Dense kernels with a fixed summation order. Every output element is
// produced by the same operation sequence regardless of pointer alignment, so
// results are bit-identical across runs and allocations.

// C[m x n] (+)= A[m x k] * B[k x n], all row-major.
template <class T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  for (std::size_t r = 0; r < m; ++r) {
    T* cr = c + r * n;
    for (std::size_t j = 0; j < k; ++j) {
      const T av = a[r * k + j];
      const T* br = b + j * n;
      for (std::size_t i = 0; i < n; ++i) cr[i] += av * br[i];
    }
  }
}

// C[k x n] = A[m x k]^T * B[m x n].
template <class T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c, c + k * n, T{0});
  for (std::size_t r = 0; r < m; ++r) {
    const T* br = b + r * n;
    for (std::size_t j = 0; j < k; ++j) {
      const T av = a[r * k + j];
      T* cr = c + j * n;
      for (std::size_t i = 0; i < n; ++i) cr[i] += av * br[i];
    }
  }
}

// Dot product with eight interleaved partial sums.
template <class T>
T dot(const T* x, const T* y, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += x[i + l] * y[i + l];
  }
  T total = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

// C[m x k] += A[m x n] * B[k x n]^T.
template <class T>
void matmul_nt_add(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < k; ++j) c[r * k + j] += dot(a + r * n, b + j * n, n);
  }
}

// Column buffer (C*9) x (H*W) for a same-padded 3x3 convolution.
template <class T>
void im2col(const T* in, int channels, std::size_t rows, std::size_t cols, T* col) {
  const std::size_t hw = rows * cols;
  for (int c = 0; c < channels; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col + (static_cast<std::size_t>(c) * 9 + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        for (std::size_t y = 0; y < rows; ++y) {
          T* drow = dst + y * cols;
          const long sy = static_cast<long>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<long>(rows)) {
            std::fill(drow, drow + cols, T{0});
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(sy) * cols;
          const long dx = kx - 1;
          for (std::size_t x = 0; x < cols; ++x) {
            const long sx = static_cast<long>(x) + dx;
            drow[x] = (sx < 0 || sx >= static_cast<long>(cols)) ? T{0} : srow[sx];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, int channels, std::size_t rows, std::size_t cols, T* out) {
  const std::size_t hw = rows * cols;
  for (int c = 0; c < channels; ++c) {
    T* plane = out + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col + (static_cast<std::size_t>(c) * 9 + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        for (std::size_t y = 0; y < rows; ++y) {
          const long sy = static_cast<long>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<long>(rows)) continue;
          T* prow = plane + static_cast<std::size_t>(sy) * cols;
          const T* srow = src + y * cols;
          for (std::size_t x = 0; x < cols; ++x) {
            const long sx = static_cast<long>(x) + kx - 1;
            if (sx >= 0 && sx < static_cast<long>(cols)) prow[sx] += srow[x];
          }
        }
      }
    }
  }
}

template <class T>
struct BlockTrace {
  int in_channels = 0;
  int channels = 0;
  std::size_t rows = 0;  // conv resolution
  std::size_t cols = 0;
  const T* input = nullptr;
  std::vector<T> act;   // post-ReLU, n x C x H x W
  std::vector<T> xhat;  // normalized, same shape
  std::vector<double> mean;
  std::vector<double> var;  // biased batch variance
  std::vector<double> inv_std;
  std::vector<std::uint32_t> argmax;  // per pooled cell, offset within the H x W plane
  std::vector<T> pooled;              // n x C x H/2 x W/2
};

template <class T>
struct Trace {
  std::size_t n = 0;
  std::vector<BlockTrace<T>> blocks;
  std::vector<double> probs;  // n x 2
  std::vector<int> labels;
};

// Runs the network; `batch_stats` selects train-mode batch-norm.
template <class T>
void run_forward(const BasicCnnModel<T>& m, const T* x, std::size_t n, bool batch_stats, Trace<T>& tr) {
  const CnnConfig& cfg = m.config;
  tr.n = n;
  tr.blocks.resize(m.blocks.size());
  const T* input = x;
  std::size_t rows = cfg.input_rows;
  std::size_t cols = cfg.input_cols;
  std::vector<T> col;
  for (std::size_t bi = 0; bi < m.blocks.size(); ++bi) {
    const auto& blk = m.blocks[bi];
    auto& bt = tr.blocks[bi];
    const int cin = blk.in_channels;
    const int cout = blk.out_channels;
    const std::size_t hw = rows * cols;
    const auto C = static_cast<std::size_t>(cout);
    bt.in_channels = cin;
    bt.channels = cout;
    bt.rows = rows;
    bt.cols = cols;
    bt.input = input;
    bt.act.resize(n * C * hw);
    col.resize(static_cast<std::size_t>(cin) * 9 * hw);
    const auto K = static_cast<std::size_t>(cin) * 9;
    for (std::size_t s = 0; s < n; ++s) {
      im2col(input + s * static_cast<std::size_t>(cin) * hw, cin, rows, cols, col.data());
      T* out = bt.act.data() + s * C * hw;
      matmul_nn(blk.weight.data(), col.data(), out, C, K, hw, false);
      for (int c = 0; c < cout; ++c) {
        const T b = blk.bias[static_cast<std::size_t>(c)];
        T* row = out + static_cast<std::size_t>(c) * hw;
        for (std::size_t i = 0; i < hw; ++i) row[i] = std::max(row[i] + b, T{0});
      }
    }

    bt.mean.assign(C, 0.0);
    bt.var.assign(C, 0.0);
    bt.inv_std.assign(C, 0.0);
    const double count = static_cast<double>(n * hw);
    for (std::size_t c = 0; c < C; ++c) {
      double mean;
      double var;
      if (batch_stats) {
        double sum = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          const T* p = bt.act.data() + (s * C + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) sum += static_cast<double>(p[i]);
        }
        mean = sum / count;
        double sq = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          const T* p = bt.act.data() + (s * C + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const double d = static_cast<double>(p[i]) - mean;
            sq += d * d;
          }
        }
        var = sq / count;
      } else {
        mean = static_cast<double>(blk.running_mean[c]);
        var = static_cast<double>(blk.running_var[c]);
      }
      bt.mean[c] = mean;
      bt.var[c] = var;
      bt.inv_std[c] = 1.0 / std::sqrt(var + cfg.bn_eps);
    }

    bt.xhat.resize(bt.act.size());
    const std::size_t prow = rows / 2;
    const std::size_t pcol = cols / 2;
    const std::size_t phw = prow * pcol;
    bt.pooled.resize(n * C * phw);
    bt.argmax.resize(n * C * phw);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t plane = (s * C + c) * hw;
        const T mu = static_cast<T>(bt.mean[c]);
        const T is = static_cast<T>(bt.inv_std[c]);
        const T g = blk.gamma[c];
        const T be = blk.beta[c];
        T* xh = bt.xhat.data() + plane;
        const T* a = bt.act.data() + plane;
        for (std::size_t i = 0; i < hw; ++i) xh[i] = (a[i] - mu) * is;
        T* po = bt.pooled.data() + (s * C + c) * phw;
        std::uint32_t* am = bt.argmax.data() + (s * C + c) * phw;
        for (std::size_t y = 0; y < prow; ++y) {
          for (std::size_t x = 0; x < pcol; ++x) {
            const std::size_t base = 2 * y * cols + 2 * x;
            const std::size_t cand[4] = {base, base + 1, base + cols, base + cols + 1};
            std::size_t best = cand[0];
            T bv = g * xh[cand[0]] + be;
            for (int k = 1; k < 4; ++k) {
              const T v = g * xh[cand[k]] + be;
              if (v > bv) {
                bv = v;
                best = cand[k];
              }
            }
            po[y * pcol + x] = bv;
            am[y * pcol + x] = static_cast<std::uint32_t>(best);
          }
        }
      }
    }
    input = bt.pooled.data();
    rows = prow;
    cols = pcol;
  }

  // Per-sample dot products keep each probability independent of batch size.
  const std::size_t d = cfg.flat_dim();
  tr.probs.resize(n * 2);
  for (std::size_t s = 0; s < n; ++s) {
    const T* f = input + s * d;
    double l0 = static_cast<double>(m.head_bias[0]);
    double l1 = static_cast<double>(m.head_bias[1]);
    for (std::size_t i = 0; i < d; ++i) {
      l0 += static_cast<double>(f[i]) * static_cast<double>(m.head_weight[i]);
      l1 += static_cast<double>(f[i]) * static_cast<double>(m.head_weight[d + i]);
    }
    const double mx = std::max(l0, l1);
    const double e0 = std::exp(l0 - mx);
    const double e1 = std::exp(l1 - mx);
    tr.probs[2 * s] = e0 / (e0 + e1);
    tr.probs[2 * s + 1] = e1 / (e0 + e1);
  }
}

template <class T>
double mean_cross_entropy(const Trace<T>& tr, std::span<const int> labels) {
  double loss = 0.0;
  for (std::size_t s = 0; s < tr.n; ++s) {
    const double p = tr.probs[2 * s + static_cast<std::size_t>(labels[s])];
    loss -= std::log(std::max(p, std::numeric_limits<double>::min()));
  }
  return loss / static_cast<double>(tr.n);
}

// Gradients of the mean cross-entropy with train-mode batch-norm.
template <class T>
void run_backward(const BasicCnnModel<T>& m, const Trace<T>& tr, std::span<const int> labels,
                  BasicCnnModel<T>& grad) {
  const std::size_t n = tr.n;
  const std::size_t d = m.config.flat_dim();
  const BlockTrace<T>& last = tr.blocks.back();
  std::vector<T> dlogits(n * 2);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double target = labels[s] == static_cast<int>(k) ? 1.0 : 0.0;
      dlogits[2 * s + k] = static_cast<T>((tr.probs[2 * s + k] - target) / static_cast<double>(n));
    }
  }
  std::vector<T> dlogits_t(2 * n);
  for (std::size_t s = 0; s < n; ++s) {
    dlogits_t[s] = dlogits[2 * s];
    dlogits_t[n + s] = dlogits[2 * s + 1];
  }
  matmul_nn(dlogits_t.data(), last.pooled.data(), grad.head_weight.data(), 2, n, d, true);
  for (std::size_t k = 0; k < 2; ++k) {
    T sum{0};
    for (std::size_t s = 0; s < n; ++s) sum += dlogits[2 * s + k];
    grad.head_bias[k] += sum;
  }
  std::vector<T> dpooled(n * d);
  matmul_nn(dlogits.data(), m.head_weight.data(), dpooled.data(), n, 2, d, false);

  std::vector<T> dact;
  std::vector<T> dinput;
  std::vector<T> col;
  std::vector<T> dcol;
  for (std::size_t bi = m.blocks.size(); bi-- > 0;) {
    const auto& blk = m.blocks[bi];
    auto& gblk = grad.blocks[bi];
    const auto& bt = tr.blocks[bi];
    const auto C = static_cast<std::size_t>(bt.channels);
    const std::size_t hw = bt.rows * bt.cols;
    const std::size_t phw = (bt.rows / 2) * (bt.cols / 2);

    // Max-pool scatter: dy lives in dact until batch-norm backward rewrites it.
    dact.assign(n * C * hw, T{0});
    for (std::size_t p = 0; p < n * C; ++p) {
      const T* dp = dpooled.data() + p * phw;
      const std::uint32_t* am = bt.argmax.data() + p * phw;
      T* dy = dact.data() + p * hw;
      for (std::size_t i = 0; i < phw; ++i) dy[am[i]] += dp[i];
    }

    const double count = static_cast<double>(n * hw);
    for (std::size_t c = 0; c < C; ++c) {
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t plane = (s * C + c) * hw;
        const T* dy = dact.data() + plane;
        const T* xh = bt.xhat.data() + plane;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_dy += static_cast<double>(dy[i]);
          sum_dy_xhat += static_cast<double>(dy[i]) * static_cast<double>(xh[i]);
        }
      }
      gblk.gamma[c] += static_cast<T>(sum_dy_xhat);
      gblk.beta[c] += static_cast<T>(sum_dy);
      const double scale = static_cast<double>(blk.gamma[c]) * bt.inv_std[c] / count;
      const auto mean_dy = static_cast<T>(sum_dy);
      const auto mean_dyx = static_cast<T>(sum_dy_xhat);
      const auto sc = static_cast<T>(scale);
      const auto cnt = static_cast<T>(count);
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t plane = (s * C + c) * hw;
        T* dy = dact.data() + plane;
        const T* xh = bt.xhat.data() + plane;
        const T* a = bt.act.data() + plane;
        for (std::size_t i = 0; i < hw; ++i) {
          const T v = sc * (cnt * dy[i] - mean_dy - xh[i] * mean_dyx);
          dy[i] = a[i] > T{0} ? v : T{0};
        }
      }
    }

    const int cin = bt.in_channels;
    const std::size_t cin_hw = static_cast<std::size_t>(cin) * hw;
    col.resize(static_cast<std::size_t>(cin) * 9 * hw);
    const auto K = static_cast<std::size_t>(cin) * 9;
    const bool need_input_grad = bi > 0;
    if (need_input_grad) {
      dinput.assign(n * cin_hw, T{0});
      dcol.resize(col.size());
    }
    for (std::size_t s = 0; s < n; ++s) {
      im2col(bt.input + s * cin_hw, cin, bt.rows, bt.cols, col.data());
      const T* dz = dact.data() + s * C * hw;
      matmul_nt_add(dz, col.data(), gblk.weight.data(), C, K, hw);
      for (std::size_t c = 0; c < C; ++c) {
        T sum{0};
        for (std::size_t i = 0; i < hw; ++i) sum += dz[c * hw + i];
        gblk.bias[c] += sum;
      }
      if (need_input_grad) {
        matmul_tn(blk.weight.data(), dz, dcol.data(), C, K, hw);
        col2im_add(dcol.data(), cin, bt.rows, bt.cols, dinput.data() + s * cin_hw);
      }
    }
    if (need_input_grad) dpooled.swap(dinput);
  }
}

template <class T>
void check_batch(const BasicCnnModel<T>& m, std::span<const T> batch, std::size_t count) {
  const std::size_t per = m.config.input_rows * m.config.input_cols;
  if (count == 0 || batch.size() != count * per) {
    fail(ErrorKind::ShapeMismatch, "cnn: expected " + std::to_string(count) + " images of " +
                                       std::to_string(m.config.input_rows) + "x" +
                                       std::to_string(m.config.input_cols) + ", got " +
                                       std::to_string(batch.size()) + " values");
  }
}

template <class T>
std::vector<std::array<double, 2>> collect_probs(const Trace<T>& tr) {
  std::vector<std::array<double, 2>> out(tr.n);
  for (std::size_t s = 0; s < tr.n; ++s) out[s] = {tr.probs[2 * s], tr.probs[2 * s + 1]};
  return out;
}

template <class T>
void update_running_stats(BasicCnnModel<T>& m, const Trace<T>& tr) {
  const double mom = m.config.bn_momentum;
  for (std::size_t bi = 0; bi < m.blocks.size(); ++bi) {
    auto& blk = m.blocks[bi];
    const auto& bt = tr.blocks[bi];
    const double count = static_cast<double>(tr.n * bt.rows * bt.cols);
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    for (std::size_t c = 0; c < blk.running_mean.size(); ++c) {
      blk.running_mean[c] =
          static_cast<T>((1.0 - mom) * static_cast<double>(blk.running_mean[c]) + mom * bt.mean[c]);
      blk.running_var[c] =
          static_cast<T>((1.0 - mom) * static_cast<double>(blk.running_var[c]) + mom * bt.var[c] * unbias);
    }
  }
}

}  // namespace

template <class T>
std::vector<std::array<double, 2>> cnn_forward(BasicCnnModel<T>& model, std::span<const T> batch,
                                               std::size_t count, CnnMode mode) {
  check_batch(model, batch, count);
  Trace<T> tr;
  run_forward(model, batch.data(), count, mode == CnnMode::Train, tr);
  if (mode == CnnMode::Train) update_running_stats(model, tr);
  return collect_probs(tr);
}

template <class T>
std::vector<std::array<double, 2>> cnn_predict(const BasicCnnModel<T>& model, std::span<const T> batch,
                                               std::size_t count) {
  check_batch(model, batch, count);
  Trace<T> tr;
  run_forward(model, batch.data(), count, false, tr);
  return collect_probs(tr);
}

template <class T>
double cnn_loss_gradient(const BasicCnnModel<T>& model, std::span<const T> batch, std::span<const int> labels,
                         BasicCnnModel<T>* grad) {
  check_batch(model, batch, labels.size());
  Trace<T> tr;
  run_forward(model, batch.data(), labels.size(), true, tr);
  const double loss = mean_cross_entropy(tr, labels);
  if (grad) run_backward(model, tr, labels, *grad);
  return loss;
}

template <class T>
double cnn_infer_loss(const BasicCnnModel<T>& model, std::span<const T> batch, std::span<const int> labels) {
  check_batch(model, batch, labels.size());
  Trace<T> tr;
  run_forward(model, batch.data(), labels.size(), false, tr);
  return mean_cross_entropy(tr, labels);
}

double cnn_gradient_check(const CnnModel64& model, std::span<const double> batch, std::span<const int> labels,
                          double h) {
  CnnModel64 grad = model.zeros_like();
  cnn_loss_gradient(model, batch, labels, &grad);
  CnnModel64 probe = model;
  auto params = probe.parameters();
  const auto grads = grad.parameters();
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double orig = params[t][i];
      params[t][i] = orig + h;
      const double up = cnn_loss_gradient<double>(probe, batch, labels, nullptr);
      params[t][i] = orig - h;
      const double down = cnn_loss_gradient<double>(probe, batch, labels, nullptr);
      params[t][i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = grads[t][i];
      const double rel = std::abs(an - fd) / std::max(std::abs(an) + std::abs(fd), 1e-7);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

bool EarlyStopper::update(int epoch, double val_loss) {
  improved_ = best_epoch_ == 0 || val_loss < best_loss_;
  if (improved_) {
    best_epoch_ = epoch;
    best_loss_ = val_loss;
    stale_ = 0;
    return false;
  }
  ++stale_;
  return patience_ > 0 && stale_ >= patience_;
}

namespace {

template <class T>
void gather(const BasicImageSet<T>& set, std::span<const std::size_t> idx, std::vector<T>& pixels,
            std::vector<int>& labels) {
  const std::size_t per = set.rows * set.cols;
  pixels.resize(idx.size() * per);
  labels.resize(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto img = set.image(idx[k]);
    std::copy(img.begin(), img.end(), pixels.begin() + static_cast<long>(k * per));
    labels[k] = set.labels[idx[k]];
  }
}

template <class T>
void check_set(const BasicImageSet<T>& set, const CnnConfig& cfg, const char* name) {
  if (set.size() == 0) fail(ErrorKind::InsufficientData, std::string("cnn_train: empty ") + name + " set");
  if (set.rows != cfg.input_rows || set.cols != cfg.input_cols ||
      set.pixels.size() != set.size() * set.rows * set.cols) {
    fail(ErrorKind::ShapeMismatch, std::string("cnn_train: ") + name + " images do not match the input shape");
  }
  for (int l : set.labels) {
    if (l != 0 && l != 1) fail(ErrorKind::BadValue, std::string("cnn_train: ") + name + " labels must be 0/1");
  }
}

}  // namespace

template <class T>
BasicCnnTrainResult<T> cnn_train(const BasicImageSet<T>& train, const BasicImageSet<T>& val,
                                 const CnnConfig& cfg) {
  cfg.validate();
  check_set(train, cfg, "training");
  check_set(val, cfg, "validation");

  BasicCnnTrainResult<T> result;
  BasicCnnModel<T> model = cnn_init<T>(cfg);
  BasicCnnModel<T> m1 = model.zeros_like();
  BasicCnnModel<T> m2 = model.zeros_like();
  Rng order_rng(cfg.seed ^ 0xC2B2AE3D27D4EB4FULL);
  EarlyStopper stopper(cfg.patience);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<T> pixels;
  std::vector<int> labels;
  long step = 0;
  result.model = model;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      gather(train, std::span<const std::size_t>(order).subspan(start, count), pixels, labels);
      Trace<T> tr;
      run_forward(model, pixels.data(), count, true, tr);
      const double loss = mean_cross_entropy(tr, labels);
      if (!std::isfinite(loss)) {
        fail(ErrorKind::Diverged, "cnn_train: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                      std::to_string(start));
      }
      BasicCnnModel<T> grad = model.zeros_like();
      run_backward(model, tr, labels, grad);
      update_running_stats(model, tr);

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto params = model.parameters();
      auto g = grad.parameters();
      auto mo = m1.parameters();
      auto ve = m2.parameters();
      for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
          const double gi = static_cast<double>(g[t][i]);
          const double mi = cfg.beta1 * static_cast<double>(mo[t][i]) + (1.0 - cfg.beta1) * gi;
          const double vi = cfg.beta2 * static_cast<double>(ve[t][i]) + (1.0 - cfg.beta2) * gi * gi;
          mo[t][i] = static_cast<T>(mi);
          ve[t][i] = static_cast<T>(vi);
          const double upd = cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_eps);
          params[t][i] = static_cast<T>(static_cast<double>(params[t][i]) - upd);
        }
      }
      total += loss * static_cast<double>(count);
    }

    CnnEpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = total / static_cast<double>(train.size());
    double vloss = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> vidx;
    for (std::size_t start = 0; start < val.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, val.size() - start);
      vidx.resize(count);
      std::iota(vidx.begin(), vidx.end(), start);
      gather(val, vidx, pixels, labels);
      Trace<T> tr;
      run_forward(model, pixels.data(), count, false, tr);
      vloss += mean_cross_entropy(tr, labels) * static_cast<double>(count);
      for (std::size_t s = 0; s < count; ++s) {
        const int pred = tr.probs[2 * s + 1] >= 0.5 ? 1 : 0;
        if (pred == labels[s]) ++correct;
      }
    }
    entry.val_loss = vloss / static_cast<double>(val.size());
    entry.val_acc = static_cast<double>(correct) / static_cast<double>(val.size());
    if (!std::isfinite(entry.val_loss)) {
      fail(ErrorKind::Diverged, "cnn_train: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.log.push_back(entry);

    const bool stop = stopper.update(epoch, entry.val_loss);
    if (stopper.improved()) result.model = model;
    if (stop) {
      result.early_stopped = true;
      break;
    }
    if (cfg.target_train_loss > 0.0 && entry.train_loss < cfg.target_train_loss) break;
  }
  result.best_epoch = stopper.best_epoch();
  return result;
}

void write_training_log(std::ostream& out, std::span<const CnnEpochLog> log) {
  out << "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << csv::format_double(e.train_loss) << ',' << csv::format_double(e.val_loss) << ','
        << csv::format_double(e.val_acc) << '\n';
  }
}

namespace layers {

template <class T>
void conv3x3_forward(std::span<const T> input, int in_channels, std::size_t rows, std::size_t cols,
                     std::span<const T> weight, std::span<const T> bias, int out_channels, std::span<T> output) {
  const std::size_t hw = rows * cols;
  if (input.size() != static_cast<std::size_t>(in_channels) * hw ||
      weight.size() != static_cast<std::size_t>(out_channels * in_channels * 9) ||
      bias.size() != static_cast<std::size_t>(out_channels) ||
      output.size() != static_cast<std::size_t>(out_channels) * hw) {
    fail(ErrorKind::ShapeMismatch, "conv3x3_forward: tensor sizes do not match");
  }
  std::vector<T> col(static_cast<std::size_t>(in_channels) * 9 * hw);
  im2col(input.data(), in_channels, rows, cols, col.data());
  const auto C = static_cast<std::size_t>(out_channels);
  matmul_nn(weight.data(), col.data(), output.data(), C, static_cast<std::size_t>(in_channels) * 9, hw, false);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < hw; ++i) output[c * hw + i] += bias[c];
  }
}

}  // namespace layers

#define VT_CNN_INSTANTIATE(T)                                                                                    \
  template struct BasicCnnModel<T>;                                                                              \
  template BasicCnnModel<T> cnn_init<T>(const CnnConfig&);                                                      \
  template std::vector<std::array<double, 2>> cnn_forward<T>(BasicCnnModel<T>&, std::span<const T>,             \
                                                             std::size_t, CnnMode);                              \
  template std::vector<std::array<double, 2>> cnn_predict<T>(const BasicCnnModel<T>&, std::span<const T>,       \
                                                             std::size_t);                                       \
  template double cnn_loss_gradient<T>(const BasicCnnModel<T>&, std::span<const T>, std::span<const int>,       \
                                       BasicCnnModel<T>*);                                                       \
  template double cnn_infer_loss<T>(const BasicCnnModel<T>&, std::span<const T>, std::span<const int>);         \
  template BasicCnnTrainResult<T> cnn_train<T>(const BasicImageSet<T>&, const BasicImageSet<T>&,                \
                                               const CnnConfig&);                                                \
  template void layers::conv3x3_forward<T>(std::span<const T>, int, std::size_t, std::size_t, std::span<const T>, \
                                           std::span<const T>, int, std::span<T>);

VT_CNN_INSTANTIATE(float)
VT_CNN_INSTANTIATE(double)

}  // namespace vt

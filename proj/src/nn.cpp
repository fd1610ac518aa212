#include "pdx/nn.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <json.hpp>

#include "pdx/errors.hpp"

namespace pdx {

namespace {

template <typename T>
void gemm(bool ta, bool tb, int m, int n, int k, T alpha, const T* A, int lda, const T* B, int ldb,
          T beta, T* C, int ldc);

template <>
void gemm<float>(bool ta, bool tb, int m, int n, int k, float alpha, const float* A, int lda,
                 const float* B, int ldb, float beta, float* C, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, A, lda, B, ldb, beta, C, ldc);
}

template <>
void gemm<double>(bool ta, bool tb, int m, int n, int k, double alpha, const double* A, int lda,
                  const double* B, int ldb, double beta, double* C, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, A, lda, B, ldb, beta, C, ldc);
}

struct Dims {
  size_t c = 0, h = 0, w = 0;
  size_t numel() const { return c * h * w; }
  bool operator==(const Dims&) const = default;
};

size_t out_dim(size_t L, size_t k, size_t s, size_t p, const std::string& what) {
  if (k == 0 || s == 0) throw ShapeError(what + ": kernel and stride must be positive");
  if (p >= k) throw ShapeError(what + ": padding must be smaller than the kernel");
  if (L + 2 * p < k) throw ShapeError(what + ": input extent smaller than the kernel");
  return (L + 2 * p - k) / s + 1;
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
class LayerBase {
 public:
  virtual ~LayerBase() = default;
  virtual void build(Dims in, bool alloc = true) = 0;
  Dims in_dims() const { return in_; }
  Dims out_dims() const { return out_; }
  virtual void forward(const Tensor<T>& x, size_t batch, Tensor<T>& y, bool keep) = 0;
  virtual void backward(const Tensor<T>& dy, size_t batch, Tensor<T>& dx) = 0;
  virtual void collect(std::vector<Tensor<T>*>&, std::vector<Tensor<T>*>&) {}
  virtual void init(Rng&) {}

 protected:
  Dims in_, out_;
};

namespace {

template <typename T>
Tensor<T> make_batch(size_t batch, Dims d) {
  return Tensor<T>({batch, d.c, d.h, d.w});
}

template <typename T>
void kaiming_uniform(Tensor<T>& w, size_t fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

// ---- convolution ----------------------------------------------------------

template <typename T>
class ConvLayer : public LayerBase<T> {
 public:
  ConvLayer(size_t cout, size_t kh, size_t kw, size_t sh, size_t sw, size_t ph, size_t pw)
      : cout_(cout), kh_(kh), kw_(kw), sh_(sh), sw_(sw), ph_(ph), pw_(pw) {}

  void build(Dims in, bool alloc = true) override {
    this->in_ = in;
    if (cout_ == 0) throw ShapeError("conv: output channels must be positive");
    size_t ho = out_dim(in.h, kh_, sh_, ph_, "conv height");
    size_t wo = out_dim(in.w, kw_, sw_, pw_, "conv width");
    this->out_ = {cout_, ho, wo};
    if (!alloc) return;
    w_ = Tensor<T>({cout_, in.c, kh_, kw_});
    b_ = Tensor<T>({cout_});
    dw_ = Tensor<T>(w_.shape);
    db_ = Tensor<T>(b_.shape);
  }

  void init(Rng& rng) override { kaiming_uniform(w_, this->in_.c * kh_ * kw_, rng); }

  void collect(std::vector<Tensor<T>*>& p, std::vector<Tensor<T>*>& g) override {
    p.push_back(&w_);
    p.push_back(&b_);
    g.push_back(&dw_);
    g.push_back(&db_);
  }

  void im2col(const T* x, T* col) const {
    Dims in = this->in_, out = this->out_;
    for (size_t c = 0; c < in.c; ++c)
      for (size_t ki = 0; ki < kh_; ++ki)
        for (size_t kj = 0; kj < kw_; ++kj) {
          T* row = col + ((c * kh_ + ki) * kw_ + kj) * out.h * out.w;
          for (size_t oh = 0; oh < out.h; ++oh) {
            long ih = static_cast<long>(oh * sh_ + ki) - static_cast<long>(ph_);
            if (ih < 0 || ih >= static_cast<long>(in.h)) {
              std::fill(row + oh * out.w, row + (oh + 1) * out.w, T(0));
              continue;
            }
            const T* src = x + (c * in.h + ih) * in.w;
            for (size_t ow = 0; ow < out.w; ++ow) {
              long iw = static_cast<long>(ow * sw_ + kj) - static_cast<long>(pw_);
              row[oh * out.w + ow] =
                  (iw < 0 || iw >= static_cast<long>(in.w)) ? T(0) : src[iw];
            }
          }
        }
  }

  void col2im_add(const T* col, T* x) const {
    Dims in = this->in_, out = this->out_;
    for (size_t c = 0; c < in.c; ++c)
      for (size_t ki = 0; ki < kh_; ++ki)
        for (size_t kj = 0; kj < kw_; ++kj) {
          const T* row = col + ((c * kh_ + ki) * kw_ + kj) * out.h * out.w;
          for (size_t oh = 0; oh < out.h; ++oh) {
            long ih = static_cast<long>(oh * sh_ + ki) - static_cast<long>(ph_);
            if (ih < 0 || ih >= static_cast<long>(in.h)) continue;
            T* dst = x + (c * in.h + ih) * in.w;
            for (size_t ow = 0; ow < out.w; ++ow) {
              long iw = static_cast<long>(ow * sw_ + kj) - static_cast<long>(pw_);
              if (iw >= 0 && iw < static_cast<long>(in.w)) dst[iw] += row[oh * out.w + ow];
            }
          }
        }
  }

  void forward(const Tensor<T>& x, size_t batch, Tensor<T>& y, bool keep) override {
    Dims in = this->in_, out = this->out_;
    size_t kk = in.c * kh_ * kw_, sp = out.h * out.w;
    y = make_batch<T>(batch, out);
    col_.assign(kk * sp, T(0));
    for (size_t n = 0; n < batch; ++n) {
      im2col(x.ptr() + n * in.numel(), col_.data());
      T* yn = y.ptr() + n * out.numel();
      gemm<T>(false, false, static_cast<int>(cout_), static_cast<int>(sp), static_cast<int>(kk),
              T(1), w_.ptr(), static_cast<int>(kk), col_.data(), static_cast<int>(sp), T(0), yn,
              static_cast<int>(sp));
      for (size_t co = 0; co < cout_; ++co) {
        T bias = b_.data[co];
        for (size_t i = 0; i < sp; ++i) yn[co * sp + i] += bias;
      }
    }
    if (keep) x_cache_ = x;
  }

  void backward(const Tensor<T>& dy, size_t batch, Tensor<T>& dx) override {
    Dims in = this->in_, out = this->out_;
    size_t kk = in.c * kh_ * kw_, sp = out.h * out.w;
    dx = make_batch<T>(batch, in);
    std::vector<T> dcol(kk * sp);
    for (size_t n = 0; n < batch; ++n) {
      const T* dyn = dy.ptr() + n * out.numel();
      im2col(x_cache_.ptr() + n * in.numel(), col_.data());
      // dW += dY * col^T, db += row sums
      gemm<T>(false, true, static_cast<int>(cout_), static_cast<int>(kk), static_cast<int>(sp),
              T(1), dyn, static_cast<int>(sp), col_.data(), static_cast<int>(sp), T(1), dw_.ptr(),
              static_cast<int>(kk));
      for (size_t co = 0; co < cout_; ++co) {
        T acc = T(0);
        for (size_t i = 0; i < sp; ++i) acc += dyn[co * sp + i];
        db_.data[co] += acc;
      }
      // dcol = W^T * dY, scattered back onto dx
      gemm<T>(true, false, static_cast<int>(kk), static_cast<int>(sp), static_cast<int>(cout_),
              T(1), w_.ptr(), static_cast<int>(kk), dyn, static_cast<int>(sp), T(0), dcol.data(),
              static_cast<int>(sp));
      col2im_add(dcol.data(), dx.ptr() + n * in.numel());
    }
  }

 private:
  size_t cout_, kh_, kw_, sh_, sw_, ph_, pw_;
  Tensor<T> w_, b_, dw_, db_;
  Tensor<T> x_cache_;
  std::vector<T> col_;
};

// ---- max pooling ----------------------------------------------------------

template <typename T>
class PoolLayer : public LayerBase<T> {
 public:
  PoolLayer(size_t kh, size_t kw, size_t sh, size_t sw, size_t ph, size_t pw)
      : kh_(kh), kw_(kw), sh_(sh), sw_(sw), ph_(ph), pw_(pw) {}

  void build(Dims in, bool alloc = true) override {
    (void)alloc;
    this->in_ = in;
    this->out_ = {in.c, out_dim(in.h, kh_, sh_, ph_, "maxpool height"),
                  out_dim(in.w, kw_, sw_, pw_, "maxpool width")};
  }

  void forward(const Tensor<T>& x, size_t batch, Tensor<T>& y, bool keep) override {
    Dims in = this->in_, out = this->out_;
    y = make_batch<T>(batch, out);
    if (keep) idx_.assign(batch * out.numel(), 0);
    for (size_t n = 0; n < batch; ++n)
      for (size_t c = 0; c < in.c; ++c) {
        const T* xc = x.ptr() + (n * in.c + c) * in.h * in.w;
        T* yc = y.ptr() + (n * out.c + c) * out.h * out.w;
        for (size_t oh = 0; oh < out.h; ++oh)
          for (size_t ow = 0; ow < out.w; ++ow) {
            T best = -std::numeric_limits<T>::infinity();
            size_t best_i = 0;
            for (size_t ki = 0; ki < kh_; ++ki) {
              long ih = static_cast<long>(oh * sh_ + ki) - static_cast<long>(ph_);
              if (ih < 0 || ih >= static_cast<long>(in.h)) continue;
              for (size_t kj = 0; kj < kw_; ++kj) {
                long iw = static_cast<long>(ow * sw_ + kj) - static_cast<long>(pw_);
                if (iw < 0 || iw >= static_cast<long>(in.w)) continue;
                size_t flat = static_cast<size_t>(ih) * in.w + static_cast<size_t>(iw);
                if (xc[flat] > best) {
                  best = xc[flat];
                  best_i = flat;
                }
              }
            }
            yc[oh * out.w + ow] = best;
            if (keep) idx_[(n * out.c + c) * out.h * out.w + oh * out.w + ow] = best_i;
          }
      }
  }

  void backward(const Tensor<T>& dy, size_t batch, Tensor<T>& dx) override {
    Dims in = this->in_, out = this->out_;
    dx = make_batch<T>(batch, in);
    for (size_t n = 0; n < batch; ++n)
      for (size_t c = 0; c < in.c; ++c) {
        const T* dyc = dy.ptr() + (n * out.c + c) * out.h * out.w;
        T* dxc = dx.ptr() + (n * in.c + c) * in.h * in.w;
        const size_t* id = idx_.data() + (n * out.c + c) * out.h * out.w;
        for (size_t i = 0; i < out.h * out.w; ++i) dxc[id[i]] += dyc[i];
      }
  }

 private:
  size_t kh_, kw_, sh_, sw_, ph_, pw_;
  std::vector<size_t> idx_;
};

// ---- relu -----------------------------------------------------------------

template <typename T>
class ReluLayer : public LayerBase<T> {
 public:
  void build(Dims in, bool alloc = true) override {
    (void)alloc;
    this->in_ = in;
    this->out_ = in;
  }
  void forward(const Tensor<T>& x, size_t batch, Tensor<T>& y, bool keep) override {
    y = x;
    for (auto& v : y.data) v = std::max(v, T(0));
    if (keep) {
      mask_.resize(x.numel());
      for (size_t i = 0; i < x.numel(); ++i) mask_[i] = x.data[i] > T(0);
    }
    (void)batch;
  }
  void backward(const Tensor<T>& dy, size_t batch, Tensor<T>& dx) override {
    dx = dy;
    for (size_t i = 0; i < dx.numel(); ++i)
      if (!mask_[i]) dx.data[i] = T(0);
    (void)batch;
  }

 private:
  std::vector<char> mask_;
};

// ---- global average pooling ----------------------------------------------

template <typename T>
class GapLayer : public LayerBase<T> {
 public:
  void build(Dims in, bool alloc = true) override {
    (void)alloc;
    this->in_ = in;
    this->out_ = {in.c, 1, 1};
  }
  void forward(const Tensor<T>& x, size_t batch, Tensor<T>& y, bool keep) override {
    Dims in = this->in_;
    size_t sp = in.h * in.w;
    y = make_batch<T>(batch, this->out_);
    for (size_t n = 0; n < batch; ++n)
      for (size_t c = 0; c < in.c; ++c) {
        const T* xc = x.ptr() + (n * in.c + c) * sp;
        T acc = T(0);
        for (size_t i = 0; i < sp; ++i) acc += xc[i];
        y.data[n * in.c + c] = acc / static_cast<T>(sp);
      }
    if (keep) x_cache_ = x;
  }
  void backward(const Tensor<T>& dy, size_t batch, Tensor<T>& dx) override {
    Dims in = this->in_;
    size_t sp = in.h * in.w;
    dx = make_batch<T>(batch, in);
    for (size_t n = 0; n < batch; ++n)
      for (size_t c = 0; c < in.c; ++c) {
        T g = dy.data[n * in.c + c] / static_cast<T>(sp);
        T* dxc = dx.ptr() + (n * in.c + c) * sp;
        for (size_t i = 0; i < sp; ++i) dxc[i] = g;
      }
  }
  const Tensor<T>& cached_input() const { return x_cache_; }

 private:
  Tensor<T> x_cache_;
};

// ---- linear ---------------------------------------------------------------

template <typename T>
class LinearLayer : public LayerBase<T> {
 public:
  explicit LinearLayer(size_t out) : nout_(out) {}

  void build(Dims in, bool alloc = true) override {
    this->in_ = in;
    nin_ = in.numel();
    if (nout_ == 0) throw ShapeError("linear: output features must be positive");
    this->out_ = {nout_, 1, 1};
    if (!alloc) return;
    w_ = Tensor<T>({nout_, nin_});
    b_ = Tensor<T>({nout_});
    dw_ = Tensor<T>(w_.shape);
    db_ = Tensor<T>(b_.shape);
  }
  void init(Rng& rng) override { kaiming_uniform(w_, nin_, rng); }
  void collect(std::vector<Tensor<T>*>& p, std::vector<Tensor<T>*>& g) override {
    p.push_back(&w_);
    p.push_back(&b_);
    g.push_back(&dw_);
    g.push_back(&db_);
  }

  void forward(const Tensor<T>& x, size_t batch, Tensor<T>& y, bool keep) override {
    y = make_batch<T>(batch, this->out_);
    gemm<T>(false, true, static_cast<int>(batch), static_cast<int>(nout_), static_cast<int>(nin_),
            T(1), x.ptr(), static_cast<int>(nin_), w_.ptr(), static_cast<int>(nin_), T(0), y.ptr(),
            static_cast<int>(nout_));
    for (size_t n = 0; n < batch; ++n)
      for (size_t o = 0; o < nout_; ++o) y.data[n * nout_ + o] += b_.data[o];
    if (keep) x_cache_ = x;
  }
  void backward(const Tensor<T>& dy, size_t batch, Tensor<T>& dx) override {
    gemm<T>(true, false, static_cast<int>(nout_), static_cast<int>(nin_), static_cast<int>(batch),
            T(1), dy.ptr(), static_cast<int>(nout_), x_cache_.ptr(), static_cast<int>(nin_), T(1),
            dw_.ptr(), static_cast<int>(nin_));
    for (size_t n = 0; n < batch; ++n)
      for (size_t o = 0; o < nout_; ++o) db_.data[o] += dy.data[n * nout_ + o];
    dx = make_batch<T>(batch, this->in_);
    gemm<T>(false, false, static_cast<int>(batch), static_cast<int>(nin_),
            static_cast<int>(nout_), T(1), dy.ptr(), static_cast<int>(nout_), w_.ptr(),
            static_cast<int>(nin_), T(0), dx.ptr(), static_cast<int>(nin_));
  }

 private:
  size_t nout_, nin_ = 0;
  Tensor<T> w_, b_, dw_, db_;
  Tensor<T> x_cache_;
};

// ---- residual basic block -------------------------------------------------

template <typename T>
class ResidualLayer : public LayerBase<T> {
 public:
  ResidualLayer(size_t cout, size_t stride, bool is2d) : cout_(cout), stride_(stride), is2d_(is2d) {}

  void build(Dims in, bool alloc = true) override {
    this->in_ = in;
    size_t sh = is2d_ ? stride_ : 1;
    size_t kh = is2d_ ? 3 : 1, ph = is2d_ ? 1 : 0;
    c1_ = std::make_unique<ConvLayer<T>>(cout_, kh, 3, sh, stride_, ph, 1);
    c1_->build(in, alloc);
    c2_ = std::make_unique<ConvLayer<T>>(cout_, kh, 3, 1, 1, ph, 1);
    c2_->build(c1_->out_dims(), alloc);
    this->out_ = c2_->out_dims();
    if (in.c != cout_ || stride_ != 1) {
      proj_ = std::make_unique<ConvLayer<T>>(cout_, 1, 1, sh, stride_, 0, 0);
      proj_->build(in, alloc);
      if (!(proj_->out_dims() == this->out_))
        throw ShapeError("residual: projection shape disagrees with the main path");
    } else if (!(in == this->out_)) {
      throw ShapeError("residual: identity skip needs matching shapes");
    }
  }

  void init(Rng& rng) override {
    c1_->init(rng);
    c2_->init(rng);
    if (proj_) proj_->init(rng);
  }

  void collect(std::vector<Tensor<T>*>& p, std::vector<Tensor<T>*>& g) override {
    c1_->collect(p, g);
    c2_->collect(p, g);
    if (proj_) proj_->collect(p, g);
  }

  void forward(const Tensor<T>& x, size_t batch, Tensor<T>& y, bool keep) override {
    Tensor<T> z1, h, z2, r;
    c1_->forward(x, batch, z1, keep);
    h = z1;
    for (auto& v : h.data) v = std::max(v, T(0));
    if (keep) {
      mask1_.resize(z1.numel());
      for (size_t i = 0; i < z1.numel(); ++i) mask1_[i] = z1.data[i] > T(0);
    }
    c2_->forward(h, batch, z2, keep);
    y = std::move(z2);
    if (proj_) {
      proj_->forward(x, batch, r, keep);
      for (size_t i = 0; i < y.numel(); ++i) y.data[i] += r.data[i];
    } else {
      for (size_t i = 0; i < y.numel(); ++i) y.data[i] += x.data[i];
    }
    if (keep) {
      mask2_.resize(y.numel());
      for (size_t i = 0; i < y.numel(); ++i) mask2_[i] = y.data[i] > T(0);
    }
    for (auto& v : y.data) v = std::max(v, T(0));
  }

  void backward(const Tensor<T>& dy, size_t batch, Tensor<T>& dx) override {
    Tensor<T> dz = dy;
    for (size_t i = 0; i < dz.numel(); ++i)
      if (!mask2_[i]) dz.data[i] = T(0);
    Tensor<T> dh, dx_main, dx_skip;
    c2_->backward(dz, batch, dh);
    for (size_t i = 0; i < dh.numel(); ++i)
      if (!mask1_[i]) dh.data[i] = T(0);
    c1_->backward(dh, batch, dx_main);
    if (proj_)
      proj_->backward(dz, batch, dx_skip);
    else
      dx_skip = dz;
    dx = dx_main;
    for (size_t i = 0; i < dx.numel(); ++i) dx.data[i] += dx_skip.data[i];
  }

 private:
  size_t cout_, stride_;
  bool is2d_;
  std::unique_ptr<ConvLayer<T>> c1_, c2_, proj_;
  std::vector<char> mask1_, mask2_;
};

template <typename T>
std::unique_ptr<LayerBase<T>> instantiate(const LayerSpec& ls, bool is2d) {
  switch (ls.kind) {
    case LayerKind::conv1d:
      return std::make_unique<ConvLayer<T>>(ls.out_channels, 1, ls.kw, 1, ls.sw, 0, ls.pw);
    case LayerKind::conv2d:
      return std::make_unique<ConvLayer<T>>(ls.out_channels, ls.kh, ls.kw, ls.sh, ls.sw, ls.ph,
                                            ls.pw);
    case LayerKind::maxpool1d:
      return std::make_unique<PoolLayer<T>>(1, ls.kw, 1, ls.sw, 0, ls.pw);
    case LayerKind::maxpool2d:
      return std::make_unique<PoolLayer<T>>(ls.kh, ls.kw, ls.sh, ls.sw, ls.ph, ls.pw);
    case LayerKind::relu:
      return std::make_unique<ReluLayer<T>>();
    case LayerKind::gap:
      return std::make_unique<GapLayer<T>>();
    case LayerKind::linear:
      return std::make_unique<LinearLayer<T>>(ls.out_channels);
    case LayerKind::residual_block:
      return std::make_unique<ResidualLayer<T>>(ls.out_channels, ls.sw, is2d);
  }
  throw ShapeError("unknown layer kind");
}

Dims input_dims(const NetworkSpec& spec) {
  if (spec.input_shape.size() == 2) return {spec.input_shape[0], 1, spec.input_shape[1]};
  if (spec.input_shape.size() == 3)
    return {spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]};
  throw ShapeError("network input must be (C, L) or (C, H, W)");
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool1d: return "maxpool1d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::relu: return "relu";
    case LayerKind::gap: return "gap";
    case LayerKind::linear: return "linear";
    case LayerKind::residual_block: return "residual_block";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::conv1d, LayerKind::conv2d, LayerKind::maxpool1d, LayerKind::maxpool2d,
                 LayerKind::relu, LayerKind::gap, LayerKind::linear, LayerKind::residual_block})
    if (to_string(k) == s) return k;
  throw ArgumentError("unknown layer kind: " + s);
}

std::vector<std::vector<size_t>> infer_shapes(const NetworkSpec& spec) {
  bool is2d = spec.is_2d();
  Dims d = input_dims(spec);
  std::vector<std::vector<size_t>> out;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    auto layer = instantiate<float>(spec.layers[i], is2d);
    try {
      layer->build(d, /*alloc=*/false);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + to_string(spec.layers[i].kind) +
                       "): " + e.what());
    }
    d = layer->out_dims();
    std::vector<size_t> shape;
    if (spec.layers[i].kind == LayerKind::gap || spec.layers[i].kind == LayerKind::linear)
      shape = {d.c};
    else if (is2d)
      shape = {d.c, d.h, d.w};
    else
      shape = {d.c, d.w};
    out.push_back(shape);
  }
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::linear ||
      d.numel() != spec.n_classes)
    throw ShapeError("network must end in a linear layer emitting one logit per class");
  return out;
}

namespace {

LayerSpec conv_spec_1d(size_t out, size_t k, size_t s, size_t p) {
  LayerSpec ls;
  ls.kind = LayerKind::conv1d;
  ls.out_channels = out;
  ls.kw = k;
  ls.sw = s;
  ls.pw = p;
  return ls;
}
LayerSpec conv_spec_2d(size_t out, size_t k, size_t s, size_t p) {
  LayerSpec ls;
  ls.kind = LayerKind::conv2d;
  ls.out_channels = out;
  ls.kh = ls.kw = k;
  ls.sh = ls.sw = s;
  ls.ph = ls.pw = p;
  return ls;
}
LayerSpec pool_spec_1d(size_t k, size_t s, size_t p) {
  LayerSpec ls;
  ls.kind = LayerKind::maxpool1d;
  ls.kw = k;
  ls.sw = s;
  ls.pw = p;
  return ls;
}
LayerSpec pool_spec_2d(size_t k, size_t s, size_t p) {
  LayerSpec ls;
  ls.kind = LayerKind::maxpool2d;
  ls.kh = ls.kw = k;
  ls.sh = ls.sw = s;
  ls.ph = ls.pw = p;
  return ls;
}
LayerSpec relu_spec() { return LayerSpec{LayerKind::relu, 0, 1, 1, 1, 1, 0, 0}; }
LayerSpec gap_spec() { return LayerSpec{LayerKind::gap, 0, 1, 1, 1, 1, 0, 0}; }
LayerSpec linear_spec(size_t out) { return LayerSpec{LayerKind::linear, out, 1, 1, 1, 1, 0, 0}; }
LayerSpec res_spec(size_t out, size_t s) {
  LayerSpec ls;
  ls.kind = LayerKind::residual_block;
  ls.out_channels = out;
  ls.sh = ls.sw = s;
  return ls;
}

void append_res_stages(NetworkSpec& spec, const std::vector<int>& counts) {
  const size_t chan[4] = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage)
    for (int b = 0; b < counts[stage]; ++b)
      spec.layers.push_back(res_spec(chan[stage], (b == 0 && stage > 0) ? 2 : 1));
}

}  // namespace

NetworkSpec make_network(const std::string& name, size_t in_channels) {
  NetworkSpec spec;
  spec.name = name;
  spec.n_classes = 4;
  auto plain_1d = [&](size_t k, size_t s, size_t p) {
    spec.input_shape = {in_channels, 3072};
    spec.layers = {conv_spec_1d(64, k, s, p), relu_spec(),        pool_spec_1d(3, 2, 1),
                   conv_spec_1d(64, 3, 1, 1), relu_spec(),        pool_spec_1d(3, 1, 1),
                   gap_spec(),                linear_spec(4)};
  };
  auto plain_2d = [&](size_t k, size_t s, size_t p) {
    spec.input_shape = {in_channels, 256, 256};
    spec.layers = {conv_spec_2d(64, k, s, p), relu_spec(),        pool_spec_2d(2, 2, 0),
                   conv_spec_2d(64, 3, 1, 1), relu_spec(),        pool_spec_2d(2, 2, 0),
                   gap_spec(),                linear_spec(4)};
  };
  auto resnet_1d = [&](size_t k, size_t s, size_t p, const std::vector<int>& counts) {
    spec.input_shape = {in_channels, 3072};
    spec.layers = {conv_spec_1d(64, k, s, p), relu_spec(), pool_spec_1d(3, 2, 1)};
    append_res_stages(spec, counts);
    spec.layers.push_back(gap_spec());
    spec.layers.push_back(linear_spec(4));
  };
  auto resnet_2d = [&](size_t k, size_t s, size_t p, const std::vector<int>& counts) {
    spec.input_shape = {in_channels, 256, 256};
    spec.layers = {conv_spec_2d(64, k, s, p), relu_spec(), pool_spec_2d(3, 2, 1)};
    append_res_stages(spec, counts);
    spec.layers.push_back(gap_spec());
    spec.layers.push_back(linear_spec(4));
  };

  if (name == "CNN1D(341@100)") plain_1d(341, 100, 0);        // subsequence-scale kernel: valid
  else if (name == "CNN1D(150@50)") plain_1d(150, 50, 0);
  else if (name == "CNN1D(3@1)") plain_1d(3, 1, 1);
  else if (name == "ResNet18(341@100)") resnet_1d(341, 100, 0, {2, 2, 2, 2});
  else if (name == "ResNet34(341@100)") resnet_1d(341, 100, 0, {3, 4, 6, 3});
  else if (name == "CNN2D(3x3@1)") plain_2d(3, 1, 1);
  else if (name == "CNN2D(7x7@2)") plain_2d(7, 2, 3);
  else if (name == "CNN2D(30x30@3)") plain_2d(30, 3, 15);
  else if (name == "ResNet18(3x3@1)") resnet_2d(3, 1, 1, {2, 2, 2, 2});
  else if (name == "ResNet34(3x3@1)") resnet_2d(3, 1, 1, {3, 4, 6, 3});
  else throw UnsupportedArchitectureError("unknown architecture: " + name);
  infer_shapes(spec);  // fail fast if the catalog entry is inconsistent
  return spec;
}

std::vector<std::string> catalog_names() {
  return {"CNN1D(341@100)",   "CNN1D(150@50)",    "CNN1D(3@1)",    "ResNet18(341@100)",
          "ResNet34(341@100)", "CNN2D(3x3@1)",     "CNN2D(7x7@2)",  "CNN2D(30x30@3)",
          "ResNet18(3x3@1)",   "ResNet34(3x3@1)"};
}

// ---------------------------------------------------------------------------

std::string NetworkSpec::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["input_shape"] = input_shape;
  j["n_classes"] = n_classes;
  j["layers"] = nlohmann::json::array();
  for (const auto& ls : layers) {
    nlohmann::json l;
    l["kind"] = pdx::to_string(ls.kind);
    l["out"] = ls.out_channels;
    l["kernel"] = {ls.kh, ls.kw};
    l["stride"] = {ls.sh, ls.sw};
    l["pad"] = {ls.ph, ls.pw};
    j["layers"].push_back(l);
  }
  return j.dump();
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  NetworkSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.input_shape = j.at("input_shape").get<std::vector<size_t>>();
  spec.n_classes = j.at("n_classes").get<size_t>();
  for (const auto& l : j.at("layers")) {
    LayerSpec ls;
    ls.kind = layer_kind_from_string(l.at("kind").get<std::string>());
    ls.out_channels = l.at("out").get<size_t>();
    auto k = l.at("kernel").get<std::vector<size_t>>();
    auto s = l.at("stride").get<std::vector<size_t>>();
    auto p = l.at("pad").get<std::vector<size_t>>();
    ls.kh = k.at(0);
    ls.kw = k.at(1);
    ls.sh = s.at(0);
    ls.sw = s.at(1);
    ls.ph = p.at(0);
    ls.pw = p.at(1);
    spec.layers.push_back(ls);
  }
  return spec;
}

// ---------------------------------------------------------------------------

template <typename T>
Net<T>::Net(NetworkSpec spec) : spec_(std::move(spec)) {
  bool is2d = spec_.is_2d();
  Dims d = input_dims(spec_);
  for (size_t i = 0; i < spec_.layers.size(); ++i) {
    layers_.push_back(instantiate<T>(spec_.layers[i], is2d));
    try {
      layers_.back()->build(d);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + pdx::to_string(spec_.layers[i].kind) +
                       "): " + e.what());
    }
    d = layers_.back()->out_dims();
  }
  if (spec_.layers.empty() || spec_.layers.back().kind != LayerKind::linear ||
      d.numel() != spec_.n_classes)
    throw ShapeError("network must end in a linear layer emitting one logit per class");
}

template <typename T>
Net<T>::~Net() = default;
template <typename T>
Net<T>::Net(Net&&) noexcept = default;
template <typename T>
Net<T>& Net<T>::operator=(Net&&) noexcept = default;

template <typename T>
void Net<T>::init_params(RngSeed seed) {
  Rng rng(derive_seed(seed.seed, "net-init"));
  for (auto& l : layers_) l->init(rng);
}

template <typename T>
std::vector<Tensor<T>*> Net<T>::params() {
  std::vector<Tensor<T>*> p, g;
  for (auto& l : layers_) l->collect(p, g);
  return p;
}

template <typename T>
std::vector<Tensor<T>*> Net<T>::grads() {
  std::vector<Tensor<T>*> p, g;
  for (auto& l : layers_) l->collect(p, g);
  return g;
}

template <typename T>
void Net<T>::zero_grads() {
  for (auto* g : grads()) std::fill(g->data.begin(), g->data.end(), T(0));
}

namespace {

template <typename T>
size_t checked_batch(const NetworkSpec& spec, const Tensor<T>& x) {
  Dims d = input_dims(spec);
  std::vector<size_t> want = {0, d.c, d.h, d.w};
  std::vector<size_t> got = x.shape;
  if (got.size() == spec.input_shape.size()) got.insert(got.begin(), 1);  // single sample
  if (got.size() == spec.input_shape.size() + 1) {
    // allow (N, C, L) by inserting the unit height
    if (got.size() == 3) got.insert(got.begin() + 2, 1);
    if (got.size() == 4 && got[1] == want[1] && got[2] == want[2] && got[3] == want[3] &&
        x.data.size() == got[0] * got[1] * got[2] * got[3])
      return got[0];
  }
  throw ShapeError("input shape does not match network " + spec.name);
}

}  // namespace

template <typename T>
Tensor<T> Net<T>::forward(const Tensor<T>& x, bool keep_cache) {
  size_t batch = checked_batch(spec_, x);
  Tensor<T> cur = x;
  cur.shape = {batch, input_dims(spec_).c, input_dims(spec_).h, input_dims(spec_).w};
  Tensor<T> next;
  for (auto& l : layers_) {
    l->forward(cur, batch, next, keep_cache);
    cur = std::move(next);
  }
  cur.shape = {batch, spec_.n_classes};
  return cur;
}

template <typename T>
double Net<T>::loss_and_backward(const Tensor<T>& x, const std::vector<int>& labels) {
  size_t batch = checked_batch(spec_, x);
  if (labels.size() != batch)
    throw ArgumentError("loss_and_backward: batch and label counts differ");
  for (int lb : labels)
    if (lb < 0 || static_cast<size_t>(lb) >= spec_.n_classes)
      throw ArgumentError("loss_and_backward: label outside the class range");

  Tensor<T> logits = forward(x, true);
  size_t K = spec_.n_classes;
  Tensor<T> dlogits({batch, K, 1, 1});
  double loss = 0.0;
  for (size_t n = 0; n < batch; ++n) {
    double mx = -1e300;
    for (size_t k = 0; k < K; ++k) mx = std::max(mx, static_cast<double>(logits.data[n * K + k]));
    double denom = 0.0;
    for (size_t k = 0; k < K; ++k)
      denom += std::exp(static_cast<double>(logits.data[n * K + k]) - mx);
    for (size_t k = 0; k < K; ++k) {
      double p = std::exp(static_cast<double>(logits.data[n * K + k]) - mx) / denom;
      dlogits.data[n * K + k] =
          static_cast<T>((p - (static_cast<size_t>(labels[n]) == k ? 1.0 : 0.0)) /
                         static_cast<double>(batch));
      if (static_cast<size_t>(labels[n]) == k) loss -= std::log(std::max(p, 1e-300));
    }
  }
  loss /= static_cast<double>(batch);

  Tensor<T> cur = std::move(dlogits), prev;
  for (size_t i = layers_.size(); i-- > 0;) {
    layers_[i]->backward(cur, batch, prev);
    cur = std::move(prev);
  }
  last_logits_ = std::move(logits);
  return loss;
}

template <typename T>
typename Net<T>::CamPair Net<T>::cam_maps(const Tensor<T>& x_single, int class_index) {
  if (class_index < 0 || static_cast<size_t>(class_index) >= spec_.n_classes)
    throw ArgumentError("cam_maps: class index out of range");
  size_t gap_idx = spec_.layers.size();
  for (size_t i = 0; i < spec_.layers.size(); ++i)
    if (spec_.layers[i].kind == LayerKind::gap) gap_idx = i;
  if (gap_idx == spec_.layers.size())
    throw UnsupportedArchitectureError("cam_maps: network has no GAP layer");

  size_t batch = checked_batch(spec_, x_single);
  if (batch != 1) throw ArgumentError("cam_maps: expects a single sample");

  Dims din = input_dims(spec_);
  Tensor<T> cur = x_single;
  cur.shape = {1, din.c, din.h, din.w};
  Tensor<T> next, activation;
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (i == gap_idx) activation = cur;  // feature maps feeding GAP
    layers_[i]->forward(cur, 1, next, true);
    cur = std::move(next);
  }

  Tensor<T> dy({1, spec_.n_classes, 1, 1});
  dy.data[static_cast<size_t>(class_index)] = T(1);
  Tensor<T> prev;
  for (size_t i = layers_.size(); i-- > gap_idx;) {
    layers_[i]->backward(dy, 1, prev);
    dy = std::move(prev);
  }

  CamPair out;
  Dims d = layers_[gap_idx]->in_dims();
  out.activation = std::move(activation);
  out.activation.shape = {d.c, d.h, d.w};
  out.gradient = std::move(dy);
  out.gradient.shape = {d.c, d.h, d.w};
  out.map_shape = spec_.is_2d() ? std::vector<size_t>{d.h, d.w} : std::vector<size_t>{d.w};
  return out;
}

template class Net<float>;
template class Net<double>;

std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = -1e300;
  for (double v : logits) mx = std::max(mx, v);
  double denom = 0.0;
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) denom += (out[i] = std::exp(logits[i] - mx));
  for (auto& v : out) v /= denom;
  return out;
}

}  // namespace pdx

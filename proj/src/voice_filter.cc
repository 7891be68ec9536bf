#include "vf/voice_filter.h"

#include <cmath>

#include <fmt/core.h>

#include "vf/util.h"

namespace vf {

void VoiceFilterConfig::validate() const {
  if (mel_bins < 1 || channels < 1 || embed_dim < 1 || lstm_hidden < 1 || dense_units < 1)
    throw UsageError("voice filter sizes must be positive");
  if (conv_layers < 1) throw UsageError("voice filter needs at least one conv layer");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw UsageError("conv kernel size must be odd");
  if (condition_after < 1 || condition_after >= conv_layers)
    throw UsageError("conditioning insertion point must lie inside the conv stack");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw UsageError("bn_momentum must be in [0, 1)");
  if (!(bn_eps > 0.0)) throw UsageError("bn_eps must be positive");
}

nlohmann::json VoiceFilterConfig::to_json() const {
  return {{"mel_bins", mel_bins},       {"channels", channels},
          {"embed_dim", embed_dim},     {"lstm_hidden", lstm_hidden},
          {"dense_units", dense_units}, {"conv_layers", conv_layers},
          {"kernel_size", kernel_size}, {"condition_after", condition_after},
          {"bn_momentum", bn_momentum}, {"bn_eps", bn_eps}};
}

VoiceFilterConfig VoiceFilterConfig::from_json(const nlohmann::json& j) {
  VoiceFilterConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "mel_bins") c.mel_bins = v.get<int>();
    else if (key == "channels") c.channels = v.get<int>();
    else if (key == "embed_dim") c.embed_dim = v.get<int>();
    else if (key == "lstm_hidden") c.lstm_hidden = v.get<int>();
    else if (key == "dense_units") c.dense_units = v.get<int>();
    else if (key == "conv_layers") c.conv_layers = v.get<int>();
    else if (key == "kernel_size") c.kernel_size = v.get<int>();
    else if (key == "condition_after") c.condition_after = v.get<int>();
    else if (key == "bn_momentum") c.bn_momentum = v.get<double>();
    else if (key == "bn_eps") c.bn_eps = v.get<double>();
    else throw UsageError(fmt::format("unknown model config key '{}'", key));
  }
  c.validate();
  return c;
}

namespace {

// Parameter layout: per conv block {weight, gamma, beta}, then the LSTM
// {w_ih, w_hh, bias}, dense {weight, bias}, output {weight, bias}.
struct Layout {
  int layers;
  std::size_t conv_w(int l) const { return 3 * static_cast<std::size_t>(l); }
  std::size_t gamma(int l) const { return 3 * static_cast<std::size_t>(l) + 1; }
  std::size_t beta(int l) const { return 3 * static_cast<std::size_t>(l) + 2; }
  std::size_t base() const { return 3 * static_cast<std::size_t>(layers); }
  std::size_t w_ih() const { return base(); }
  std::size_t w_hh() const { return base() + 1; }
  std::size_t lstm_b() const { return base() + 2; }
  std::size_t dense_w() const { return base() + 3; }
  std::size_t dense_b() const { return base() + 4; }
  std::size_t out_w() const { return base() + 5; }
  std::size_t out_b() const { return base() + 6; }
  std::size_t run_mean(int l) const { return 2 * static_cast<std::size_t>(l); }
  std::size_t run_var(int l) const { return 2 * static_cast<std::size_t>(l) + 1; }
};

template <class S>
Mat<S> sigmoid(const Mat<S>& x) {
  return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

// Same-padded 1D convolution; weight rows are grouped per tap: (K*Cin) x Cout.
template <class S>
Mat<S> conv_forward(const Mat<S>& in, const Mat<S>& w, int kernel) {
  const Eigen::Index frames = in.rows(), cin = in.cols();
  const int pad = (kernel - 1) / 2;
  Mat<S> out = Mat<S>::Zero(frames, w.cols());
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index t1 = std::min<Eigen::Index>(frames, frames - shift);
    if (t1 <= t0) continue;
    out.middleRows(t0, t1 - t0).noalias() += in.middleRows(t0 + shift, t1 - t0) * w.middleRows(k * cin, cin);
  }
  return out;
}

template <class S>
void conv_backward(const Mat<S>& in, const Mat<S>& w, int kernel, const Mat<S>& d_out, Mat<S>& d_w, Mat<S>* d_in) {
  const Eigen::Index frames = in.rows(), cin = in.cols();
  const int pad = (kernel - 1) / 2;
  if (d_in) *d_in = Mat<S>::Zero(frames, cin);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index t1 = std::min<Eigen::Index>(frames, frames - shift);
    if (t1 <= t0) continue;
    const Eigen::Index n = t1 - t0;
    d_w.middleRows(k * cin, cin).noalias() += in.middleRows(t0 + shift, n).transpose() * d_out.middleRows(t0, n);
    if (d_in) d_in->middleRows(t0 + shift, n).noalias() += d_out.middleRows(t0, n) * w.middleRows(k * cin, cin).transpose();
  }
}

void mix(std::uint64_t& h, std::uint64_t v) {
  h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
}

}  // namespace

template <class S>
struct VoiceFilterNet<S>::Cache {
  struct Utt {
    std::vector<Mat<S>> inputs;  // conv block inputs
    std::vector<Mat<S>> xhat;    // normalized pre-activations
    std::vector<Mat<S>> act;     // block outputs after ReLU
    Mat<S> gates;                // T x 4H, activated (i, f, g, o)
    Mat<S> cell, cell_tanh, hidden;
    Mat<S> dense;                // after ReLU
    Mat<S> out;
  };
  std::vector<Utt> utts;
  std::vector<RowVec<S>> mean, var, inv_std;
  Eigen::Index frames = 0;
};

template <class S>
VoiceFilterNet<S>::VoiceFilterNet(VoiceFilterConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.channels, k = cfg_.kernel_size, h = cfg_.lstm_hidden;
  for (int l = 0; l < cfg_.conv_layers; ++l) {
    int cin = c;
    if (l == 0) cin = cfg_.mel_bins;
    if (l == cfg_.condition_after) cin = c + cfg_.embed_dim + 2;
    params_.add(fmt::format("conv{}.weight", l), static_cast<Eigen::Index>(k) * cin, c);
    params_.add(fmt::format("bn{}.gamma", l), 1, c);
    params_.add(fmt::format("bn{}.beta", l), 1, c);
    buffers_.add(fmt::format("bn{}.running_mean", l), 1, c);
    buffers_.add(fmt::format("bn{}.running_var", l), 1, c);
    params_[3 * static_cast<std::size_t>(l) + 1].setOnes();
    buffers_[2 * static_cast<std::size_t>(l) + 1].setOnes();
  }
  params_.add("lstm.w_ih", c, 4 * h);
  params_.add("lstm.w_hh", h, 4 * h);
  params_.add("lstm.bias", 1, 4 * h);
  params_.add("dense.weight", h, cfg_.dense_units);
  params_.add("dense.bias", 1, cfg_.dense_units);
  params_.add("out.weight", cfg_.dense_units, cfg_.mel_bins);
  params_.add("out.bias", 1, cfg_.mel_bins);
}

template <class S>
void VoiceFilterNet<S>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Layout L{cfg_.conv_layers};
  const int h = cfg_.lstm_hidden;
  for (int l = 0; l < cfg_.conv_layers; ++l) {
    auto& w = params_[L.conv_w(l)];
    init_uniform<S>(w, static_cast<double>(w.rows()), std::sqrt(2.0), rng);
    params_[L.gamma(l)].setOnes();
    params_[L.beta(l)].setZero();
    buffers_[L.run_mean(l)].setZero();
    buffers_[L.run_var(l)].setOnes();
  }
  const double lstm_gain = 1.0 / std::sqrt(3.0);
  init_uniform<S>(params_[L.w_ih()], h, lstm_gain, rng);
  init_uniform<S>(params_[L.w_hh()], h, lstm_gain, rng);
  params_[L.lstm_b()].setZero();
  params_[L.lstm_b()].middleCols(h, h).setOnes();  // forget gate
  init_uniform<S>(params_[L.dense_w()], h, std::sqrt(2.0), rng);
  params_[L.dense_b()].setZero();
  init_uniform<S>(params_[L.out_w()], cfg_.dense_units, 1.0, rng);
  params_[L.out_b()].setZero();
}

template <class S>
void VoiceFilterNet<S>::check_input(const VfInput<S>& in) const {
  const auto frames = in.mel.rows();
  if (in.mel.cols() != cfg_.mel_bins)
    throw DataError(fmt::format("voice filter: input has {} bins, model expects {}", in.mel.cols(), cfg_.mel_bins));
  if (frames < 1) throw DataError("voice filter: empty input");
  if (in.speaker.size() != cfg_.embed_dim)
    throw DataError(fmt::format("voice filter: speaker embedding has dimension {}, model expects {}",
                                in.speaker.size(), cfg_.embed_dim));
  if (static_cast<Eigen::Index>(in.logf0.size()) != frames || static_cast<Eigen::Index>(in.voicing.size()) != frames)
    throw DataError(fmt::format("voice filter: conditioning length ({} log-f0, {} voicing) does not match {} frames",
                                in.logf0.size(), in.voicing.size(), frames));
}

template <class S>
double VoiceFilterNet<S>::run(std::span<const VfInput<S>> batch, NormMode mode, Cache& cache) const {
  const Layout L{cfg_.conv_layers};
  const int h = cfg_.lstm_hidden;
  const int c = cfg_.channels;
  const S eps = static_cast<S>(cfg_.bn_eps);
  cache.utts.assign(batch.size(), {});
  cache.frames = 0;
  for (const auto& in : batch) {
    check_input(in);
    cache.frames += in.mel.rows();
  }
  if (batch.empty()) throw DataError("voice filter: empty batch");
  if (mode == NormMode::kBatch && cache.frames < 2)
    throw DataError("voice filter: batch statistics need at least two frames");

  cache.mean.assign(cfg_.conv_layers, {});
  cache.var.assign(cfg_.conv_layers, {});
  cache.inv_std.assign(cfg_.conv_layers, {});
  std::vector<Mat<S>> z(batch.size());

  for (int l = 0; l < cfg_.conv_layers; ++l) {
    for (std::size_t u = 0; u < batch.size(); ++u) {
      auto& uc = cache.utts[u];
      if (l == 0) {
        uc.inputs.push_back(batch[u].mel);
      } else if (l == cfg_.condition_after) {
        const auto frames = batch[u].mel.rows();
        Mat<S> in(frames, c + cfg_.embed_dim + 2);
        in.leftCols(c) = uc.act.back();
        in.middleCols(c, cfg_.embed_dim) = batch[u].speaker.replicate(frames, 1);
        for (Eigen::Index t = 0; t < frames; ++t) {
          in(t, c + cfg_.embed_dim) = batch[u].logf0[static_cast<std::size_t>(t)];
          in(t, c + cfg_.embed_dim + 1) = batch[u].voicing[static_cast<std::size_t>(t)];
        }
        uc.inputs.push_back(std::move(in));
      } else {
        uc.inputs.push_back(uc.act.back());
      }
      z[u] = conv_forward<S>(uc.inputs.back(), params_[L.conv_w(l)], cfg_.kernel_size);
    }
    RowVec<S> mean, var;
    if (mode == NormMode::kBatch) {
      mean = RowVec<S>::Zero(c);
      for (const auto& zu : z) mean += zu.colwise().sum();
      mean /= static_cast<S>(cache.frames);
      var = RowVec<S>::Zero(c);
      for (const auto& zu : z) var += (zu.rowwise() - mean).array().square().matrix().colwise().sum();
      var /= static_cast<S>(cache.frames);
    } else {
      mean = buffers_[L.run_mean(l)];
      var = buffers_[L.run_var(l)];
    }
    const RowVec<S> inv_std = (var.array() + eps).rsqrt().matrix();
    for (std::size_t u = 0; u < batch.size(); ++u) {
      auto& uc = cache.utts[u];
      Mat<S> xhat = ((z[u].rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
      Mat<S> y = ((xhat.array().rowwise() * params_[L.gamma(l)].row(0).array()).rowwise() +
                  params_[L.beta(l)].row(0).array())
                     .matrix();
      uc.act.push_back(y.cwiseMax(S(0)));
      uc.xhat.push_back(std::move(xhat));
    }
    cache.mean[l] = mean;
    cache.var[l] = var;
    cache.inv_std[l] = inv_std;
  }

  const auto& w_ih = params_[L.w_ih()];
  const auto& w_hh = params_[L.w_hh()];
  for (std::size_t u = 0; u < batch.size(); ++u) {
    auto& uc = cache.utts[u];
    const auto frames = batch[u].mel.rows();
    Mat<S> pre = (uc.act.back() * w_ih).rowwise() + params_[L.lstm_b()].row(0);
    uc.gates.resize(frames, 4 * h);
    uc.cell.resize(frames, h);
    uc.cell_tanh.resize(frames, h);
    uc.hidden.resize(frames, h);
    RowVec<S> h_prev = RowVec<S>::Zero(h), c_prev = RowVec<S>::Zero(h);
    for (Eigen::Index t = 0; t < frames; ++t) {
      RowVec<S> a = pre.row(t);
      a.noalias() += h_prev * w_hh;
      RowVec<S> g(4 * h);
      for (int j = 0; j < h; ++j) {
        g(j) = S(1) / (S(1) + std::exp(-a(j)));
        g(h + j) = S(1) / (S(1) + std::exp(-a(h + j)));
        g(2 * h + j) = std::tanh(a(2 * h + j));
        g(3 * h + j) = S(1) / (S(1) + std::exp(-a(3 * h + j)));
      }
      RowVec<S> cell = (g.segment(h, h).array() * c_prev.array() +
                        g.segment(0, h).array() * g.segment(2 * h, h).array())
                           .matrix();
      RowVec<S> ct = cell.array().tanh().matrix();
      RowVec<S> hid = (g.segment(3 * h, h).array() * ct.array()).matrix();
      uc.gates.row(t) = g;
      uc.cell.row(t) = cell;
      uc.cell_tanh.row(t) = ct;
      uc.hidden.row(t) = hid;
      h_prev = hid;
      c_prev = cell;
    }
    uc.dense = ((uc.hidden * params_[L.dense_w()]).rowwise() + params_[L.dense_b()].row(0)).cwiseMax(S(0));
    uc.out = (uc.dense * params_[L.out_w()]).rowwise() + params_[L.out_b()].row(0);
  }
  return 0.0;
}

template <class S>
std::vector<Mat<S>> VoiceFilterNet<S>::forward_batch(std::span<const VfInput<S>> batch, NormMode mode) const {
  Cache cache;
  run(batch, mode, cache);
  std::vector<Mat<S>> out;
  out.reserve(batch.size());
  for (auto& u : cache.utts) out.push_back(std::move(u.out));
  return out;
}

template <class S>
Mat<S> VoiceFilterNet<S>::forward(const VfInput<S>& in) const {
  return forward_batch(std::span<const VfInput<S>>(&in, 1), NormMode::kRunning).front();
}

template <class S>
VfLossResult<S> VoiceFilterNet<S>::loss_and_gradients(std::span<const VfInput<S>> batch,
                                                       std::span<const Mat<S>> targets, NormMode mode) const {
  if (targets.size() != batch.size()) throw DataError("voice filter: target count does not match batch");
  Cache cache;
  run(batch, mode, cache);
  const Layout L{cfg_.conv_layers};
  const int h = cfg_.lstm_hidden;
  const int c = cfg_.channels;
  const S scale = S(1) / static_cast<S>(cache.frames * cfg_.mel_bins);

  VfLossResult<S> res;
  res.grads = params_.zeros_like();
  auto& g = res.grads;
  std::uint64_t sig = 0xcbf29ce484222325ULL;

  double abs_sum = 0.0;
  std::vector<Mat<S>> d_act(batch.size());
  for (std::size_t u = 0; u < batch.size(); ++u) {
    auto& uc = cache.utts[u];
    const auto& target = targets[u];
    if (target.rows() != uc.out.rows() || target.cols() != uc.out.cols())
      throw DataError(fmt::format("l1 loss: shape mismatch ({}x{} vs {}x{})", uc.out.rows(), uc.out.cols(),
                                  target.rows(), target.cols()));
    const auto frames = uc.out.rows();
    Mat<S> diff = uc.out - target;
    abs_sum += static_cast<double>(diff.cwiseAbs().sum());
    // Subgradient of |x| at exactly 0 is 0.
    Mat<S> d_out = diff.unaryExpr([&](S v) { return v > S(0) ? scale : (v < S(0) ? -scale : S(0)); });
    for (Eigen::Index i = 0; i < diff.size(); ++i) mix(sig, diff(i) > S(0) ? 2 : (diff(i) < S(0) ? 1 : 0));

    g[L.out_w()].noalias() += uc.dense.transpose() * d_out;
    g[L.out_b()] += d_out.colwise().sum();
    Mat<S> d_dense = d_out * params_[L.out_w()].transpose();
    for (Eigen::Index i = 0; i < d_dense.size(); ++i) {
      const bool on = uc.dense(i) > S(0);
      mix(sig, on);
      if (!on) d_dense(i) = S(0);
    }
    g[L.dense_w()].noalias() += uc.hidden.transpose() * d_dense;
    g[L.dense_b()] += d_dense.colwise().sum();
    Mat<S> d_hidden = d_dense * params_[L.dense_w()].transpose();

    // Backpropagation through time.
    Mat<S> d_pre(frames, 4 * h);
    RowVec<S> dh_next = RowVec<S>::Zero(h), dc_next = RowVec<S>::Zero(h);
    const auto& w_hh = params_[L.w_hh()];
    for (Eigen::Index t = frames - 1; t >= 0; --t) {
      const RowVec<S> gt = uc.gates.row(t);
      const auto i_g = gt.segment(0, h).array();
      const auto f_g = gt.segment(h, h).array();
      const auto c_g = gt.segment(2 * h, h).array();
      const auto o_g = gt.segment(3 * h, h).array();
      const RowVec<S> dh = d_hidden.row(t) + dh_next;
      const auto ct = uc.cell_tanh.row(t).array();
      RowVec<S> dc = (dh.array() * o_g * (S(1) - ct.square())).matrix() + dc_next;
      const RowVec<S> c_prev = t > 0 ? RowVec<S>(uc.cell.row(t - 1)) : RowVec<S>::Zero(h);
      RowVec<S> da(4 * h);
      da.segment(0, h) = (dc.array() * c_g * i_g * (S(1) - i_g)).matrix();
      da.segment(h, h) = (dc.array() * c_prev.array() * f_g * (S(1) - f_g)).matrix();
      da.segment(2 * h, h) = (dc.array() * i_g * (S(1) - c_g.square())).matrix();
      da.segment(3 * h, h) = (dh.array() * ct * o_g * (S(1) - o_g)).matrix();
      d_pre.row(t) = da;
      if (t > 0) g[L.w_hh()].noalias() += uc.hidden.row(t - 1).transpose() * da;
      dh_next.noalias() = da * w_hh.transpose();
      dc_next = (dc.array() * f_g).matrix();
    }
    g[L.w_ih()].noalias() += uc.act.back().transpose() * d_pre;
    g[L.lstm_b()] += d_pre.colwise().sum();
    d_act[u] = d_pre * params_[L.w_ih()].transpose();
  }
  res.loss = abs_sum * static_cast<double>(scale);

  for (int l = cfg_.conv_layers - 1; l >= 0; --l) {
    const auto& gamma = params_[L.gamma(l)];
    std::vector<Mat<S>> d_y(batch.size());
    for (std::size_t u = 0; u < batch.size(); ++u) {
      const auto& act = cache.utts[u].act[static_cast<std::size_t>(l)];
      d_y[u] = d_act[u];
      for (Eigen::Index i = 0; i < act.size(); ++i) {
        const bool on = act(i) > S(0);
        mix(sig, on);
        if (!on) d_y[u](i) = S(0);
      }
      const auto& xhat = cache.utts[u].xhat[static_cast<std::size_t>(l)];
      g[L.gamma(l)] += d_y[u].cwiseProduct(xhat).colwise().sum();
      g[L.beta(l)] += d_y[u].colwise().sum();
    }
    const RowVec<S>& inv_std = cache.inv_std[static_cast<std::size_t>(l)];
    std::vector<Mat<S>> d_z(batch.size());
    if (mode == NormMode::kBatch) {
      // dz = inv_std / N * (N dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
      RowVec<S> sum_dx = RowVec<S>::Zero(c), sum_dx_x = RowVec<S>::Zero(c);
      std::vector<Mat<S>> d_xhat(batch.size());
      for (std::size_t u = 0; u < batch.size(); ++u) {
        d_xhat[u] = (d_y[u].array().rowwise() * gamma.row(0).array()).matrix();
        sum_dx += d_xhat[u].colwise().sum();
        sum_dx_x += d_xhat[u].cwiseProduct(cache.utts[u].xhat[static_cast<std::size_t>(l)]).colwise().sum();
      }
      const S n = static_cast<S>(cache.frames);
      for (std::size_t u = 0; u < batch.size(); ++u) {
        const auto& xhat = cache.utts[u].xhat[static_cast<std::size_t>(l)];
        Mat<S> t1 = (d_xhat[u] * n).rowwise() - sum_dx;
        t1 -= (xhat.array().rowwise() * sum_dx_x.array()).matrix();
        d_z[u] = ((t1.array().rowwise() * inv_std.array()) / n).matrix();
      }
    } else {
      for (std::size_t u = 0; u < batch.size(); ++u)
        d_z[u] = (d_y[u].array().rowwise() * (gamma.row(0).array() * inv_std.array())).matrix();
    }
    for (std::size_t u = 0; u < batch.size(); ++u) {
      const auto& in = cache.utts[u].inputs[static_cast<std::size_t>(l)];
      Mat<S> d_in;
      conv_backward<S>(in, params_[L.conv_w(l)], cfg_.kernel_size, d_z[u], g[L.conv_w(l)], l > 0 ? &d_in : nullptr);
      if (l == cfg_.condition_after)
        d_act[u] = d_in.leftCols(c);  // conditioning inputs are not parameters
      else if (l > 0)
        d_act[u] = std::move(d_in);
    }
  }

  for (std::size_t i = 0; i < g.size(); ++i)
    if (!g[i].allFinite()) throw NumericalError(fmt::format("non-finite gradient in layer '{}'", g.name(i)));
  if (!std::isfinite(res.loss)) throw NumericalError("non-finite loss");

  res.kink_signature = sig;
  if (mode == NormMode::kBatch) {
    res.batch_mean = cache.mean;
    res.batch_var = cache.var;
  }
  for (auto& u : cache.utts) res.outputs.push_back(std::move(u.out));
  return res;
}

template <class S>
void VoiceFilterNet<S>::update_running_stats(const std::vector<RowVec<S>>& mean, const std::vector<RowVec<S>>& var) {
  const Layout L{cfg_.conv_layers};
  const S m = static_cast<S>(cfg_.bn_momentum);
  for (int l = 0; l < cfg_.conv_layers; ++l) {
    buffers_[L.run_mean(l)] = m * buffers_[L.run_mean(l)] + (S(1) - m) * mean[static_cast<std::size_t>(l)];
    buffers_[L.run_var(l)] = m * buffers_[L.run_var(l)] + (S(1) - m) * var[static_cast<std::size_t>(l)];
  }
}

template class VoiceFilterNet<float>;
template class VoiceFilterNet<double>;

template <class S>
VfInput<S> make_vf_input(const MelSpectrogram& mel, const ConditioningInput& cond) {
  VfInput<S> in;
  in.mel = mel.frames.cast<S>();
  in.speaker = cond.speaker.transpose().cast<S>();
  in.logf0.assign(cond.f0.values.begin(), cond.f0.values.end());
  in.voicing.resize(cond.f0.voiced.size());
  for (std::size_t t = 0; t < cond.f0.voiced.size(); ++t) in.voicing[t] = cond.f0.voiced[t] ? S(1) : S(0);
  return in;
}

template VfInput<float> make_vf_input<float>(const MelSpectrogram&, const ConditioningInput&);
template VfInput<double> make_vf_input<double>(const MelSpectrogram&, const ConditioningInput&);

MelSpectrogram vf_forward(const VoiceFilterModel& model, const MelSpectrogram& mel, const ConditioningInput& cond) {
  MelSpectrogram out;
  out.hop_length = mel.hop_length;
  out.sample_rate = mel.sample_rate;
  out.frames = model.forward(make_vf_input<float>(mel, cond));
  return out;
}

template <class S>
double l1_loss(const Mat<S>& pred, const Mat<S>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DataError(fmt::format("l1 loss: shape mismatch ({}x{} vs {}x{})", pred.rows(), pred.cols(), target.rows(),
                                target.cols()));
  if (pred.size() == 0) throw DataError("l1 loss: empty input");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) sum += std::abs(static_cast<double>(pred(i)) - target(i));
  return sum / static_cast<double>(pred.size());
}

template double l1_loss<float>(const Mat<float>&, const Mat<float>&);
template double l1_loss<double>(const Mat<double>&, const Mat<double>&);

double l1_loss(const MelSpectrogram& pred, const MelSpectrogram& target) {
  return l1_loss<float>(pred.frames, target.frames);
}

}  // namespace vf

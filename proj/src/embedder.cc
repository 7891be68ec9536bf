#include "vf/embedder.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "vf/util.h"

namespace vf {

void EmbedderConfig::validate() const {
  if (mel_bins < 1 || channels < 1 || embed_dim < 1) throw UsageError("embedder sizes must be positive");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw UsageError("embedder kernel size must be odd");
}

nlohmann::json EmbedderConfig::to_json() const {
  return {{"mel_bins", mel_bins}, {"channels", channels}, {"kernel_size", kernel_size}, {"embed_dim", embed_dim}};
}

EmbedderConfig EmbedderConfig::from_json(const nlohmann::json& j) {
  EmbedderConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "mel_bins") c.mel_bins = v.get<int>();
    else if (key == "channels") c.channels = v.get<int>();
    else if (key == "kernel_size") c.kernel_size = v.get<int>();
    else if (key == "embed_dim") c.embed_dim = v.get<int>();
    else throw UsageError(fmt::format("unknown embedder config key '{}'", key));
  }
  c.validate();
  return c;
}

template <class S>
Ge2eResult<S> ge2e_loss(const Mat<S>& e, int speakers, int utterances, S w, S b) {
  if (speakers < 2 || utterances < 2)
    throw DataError(fmt::format("ge2e: need at least 2 speakers and 2 utterances each (got {} x {})", speakers,
                                utterances));
  if (e.rows() != static_cast<Eigen::Index>(speakers) * utterances)
    throw DataError("ge2e: embedding count does not match speakers x utterances");
  const int n = speakers, m = utterances;
  const Eigen::Index d = e.cols();
  const S tiny = S(1e-12);

  Mat<S> centroids = Mat<S>::Zero(n, d);
  for (int j = 0; j < n; ++j) centroids.row(j) = e.middleRows(static_cast<Eigen::Index>(j) * m, m).colwise().mean();

  Ge2eResult<S> res;
  res.d_embeddings = Mat<S>::Zero(e.rows(), d);
  Mat<S> d_centroids = Mat<S>::Zero(n, d);
  const S norm = S(1) / static_cast<S>(n * m);
  double total = 0.0;

  // cos(x, c) and its partials.
  auto cosine = [&](const RowVec<S>& x, const RowVec<S>& c, RowVec<S>* dx, RowVec<S>* dc) {
    const S nx = std::max(x.norm(), tiny), ncv = std::max(c.norm(), tiny);
    const S cs = x.dot(c) / (nx * ncv);
    if (dx) *dx = c / (nx * ncv) - cs * x / (nx * nx);
    if (dc) *dc = x / (nx * ncv) - cs * c / (ncv * ncv);
    return cs;
  };

  std::vector<S> cos_row(static_cast<std::size_t>(n)), prob(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < m; ++i) {
      const Eigen::Index row = static_cast<Eigen::Index>(j) * m + i;
      const RowVec<S> x = e.row(row);
      const RowVec<S> own = (centroids.row(j) * static_cast<S>(m) - x) / static_cast<S>(m - 1);
      S max_s = -std::numeric_limits<S>::infinity();
      for (int k = 0; k < n; ++k) {
        cos_row[static_cast<std::size_t>(k)] = cosine(x, k == j ? own : RowVec<S>(centroids.row(k)), nullptr, nullptr);
        max_s = std::max(max_s, w * cos_row[static_cast<std::size_t>(k)] + b);
      }
      S z = 0;
      for (int k = 0; k < n; ++k) {
        prob[static_cast<std::size_t>(k)] = std::exp(w * cos_row[static_cast<std::size_t>(k)] + b - max_s);
        z += prob[static_cast<std::size_t>(k)];
      }
      for (auto& p : prob) p /= z;
      const S s_own = w * cos_row[static_cast<std::size_t>(j)] + b;
      total += static_cast<double>(-s_own + max_s + std::log(z));

      for (int k = 0; k < n; ++k) {
        const S ds = (prob[static_cast<std::size_t>(k)] - (k == j ? S(1) : S(0))) * norm;
        res.d_w += ds * cos_row[static_cast<std::size_t>(k)];
        res.d_b += ds;
        RowVec<S> dx, dc;
        cosine(x, k == j ? own : RowVec<S>(centroids.row(k)), &dx, &dc);
        res.d_embeddings.row(row) += ds * w * dx;
        if (k == j) {
          // own = (sum of the other M-1 utterances) / (M-1)
          const RowVec<S> share = ds * w * dc / static_cast<S>(m - 1);
          for (int q = 0; q < m; ++q)
            if (q != i) res.d_embeddings.row(static_cast<Eigen::Index>(j) * m + q) += share;
        } else {
          d_centroids.row(k) += ds * w * dc;
        }
      }
    }
  }
  for (int k = 0; k < n; ++k)
    for (int q = 0; q < m; ++q)
      res.d_embeddings.row(static_cast<Eigen::Index>(k) * m + q) += d_centroids.row(k) / static_cast<S>(m);
  res.loss = total * static_cast<double>(norm);
  return res;
}

template Ge2eResult<float> ge2e_loss<float>(const Mat<float>&, int, int, float, float);
template Ge2eResult<double> ge2e_loss<double>(const Mat<double>&, int, int, double, double);

namespace {

constexpr std::size_t kConv1W = 0, kConv1B = 1, kConv2W = 2, kConv2B = 3, kProjW = 4, kProjB = 5;
constexpr std::size_t kInMean = 0, kInScale = 1;

// Rows in[stride * t + k - pad] for t in [0, out_frames), zero outside.
template <class S>
Mat<S> gather_tap(const Mat<S>& in, Eigen::Index out_frames, int k, int pad, int stride) {
  Mat<S> g = Mat<S>::Zero(out_frames, in.cols());
  for (Eigen::Index t = 0; t < out_frames; ++t) {
    const Eigen::Index src = stride * t + k - pad;
    if (src >= 0 && src < in.rows()) g.row(t) = in.row(src);
  }
  return g;
}

template <class S>
Mat<S> strided_conv(const Mat<S>& in, const Mat<S>& w, const Mat<S>& bias, int kernel) {
  const Eigen::Index out_frames = (in.rows() + 1) / 2;
  const int pad = (kernel - 1) / 2;
  Mat<S> out = bias.replicate(out_frames, 1);
  for (int k = 0; k < kernel; ++k)
    out.noalias() += gather_tap<S>(in, out_frames, k, pad, 2) * w.middleRows(k * in.cols(), in.cols());
  return out;
}

template <class S>
void strided_conv_backward(const Mat<S>& in, const Mat<S>& w, int kernel, const Mat<S>& d_out, Mat<S>& d_w,
                           Mat<S>& d_b, Mat<S>* d_in) {
  const Eigen::Index out_frames = d_out.rows();
  const int pad = (kernel - 1) / 2;
  const Eigen::Index cin = in.cols();
  d_b += d_out.colwise().sum();
  if (d_in) *d_in = Mat<S>::Zero(in.rows(), cin);
  for (int k = 0; k < kernel; ++k) {
    d_w.middleRows(k * cin, cin).noalias() += gather_tap<S>(in, out_frames, k, pad, 2).transpose() * d_out;
    if (d_in) {
      const Mat<S> d_tap = d_out * w.middleRows(k * cin, cin).transpose();
      for (Eigen::Index t = 0; t < out_frames; ++t) {
        const Eigen::Index src = 2 * t + k - pad;
        if (src >= 0 && src < in.rows()) d_in->row(src) += d_tap.row(t);
      }
    }
  }
}

}  // namespace

template <class S>
struct SpeakerEmbedderNet<S>::Trace {
  Mat<S> x, a1, a2;
  RowVec<S> pooled, v, e;
};

template <class S>
SpeakerEmbedderNet<S>::SpeakerEmbedderNet(EmbedderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int k = cfg_.kernel_size, c = cfg_.channels;
  params_.add("conv1.weight", static_cast<Eigen::Index>(k) * cfg_.mel_bins, c);
  params_.add("conv1.bias", 1, c);
  params_.add("conv2.weight", static_cast<Eigen::Index>(k) * c, c);
  params_.add("conv2.bias", 1, c);
  params_.add("proj.weight", c, cfg_.embed_dim);
  params_.add("proj.bias", 1, cfg_.embed_dim);
  params_.add("ge2e.w", 1, 1);
  params_.add("ge2e.b", 1, 1);
  buffers_.add("input.mean", 1, cfg_.mel_bins);
  buffers_.add("input.scale", 1, cfg_.mel_bins);
  buffers_[kInScale].setOnes();
  params_[w_index()](0, 0) = S(10);
  params_[b_index()](0, 0) = S(-5);
}

template <class S>
void SpeakerEmbedderNet<S>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  init_uniform<S>(params_[kConv1W], static_cast<double>(params_[kConv1W].rows()), std::sqrt(2.0), rng);
  params_[kConv1B].setZero();
  init_uniform<S>(params_[kConv2W], static_cast<double>(params_[kConv2W].rows()), std::sqrt(2.0), rng);
  params_[kConv2B].setZero();
  init_uniform<S>(params_[kProjW], cfg_.channels, 1.0, rng);
  params_[kProjB].setZero();
  params_[w_index()](0, 0) = S(10);
  params_[b_index()](0, 0) = S(-5);
}

template <class S>
void SpeakerEmbedderNet<S>::fit_input_normalization(const std::vector<const Eigen::MatrixXf*>& mels) {
  const int bins = cfg_.mel_bins;
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(bins), sq = Eigen::RowVectorXd::Zero(bins);
  double count = 0.0;
  for (const auto* m : mels) {
    if (m->cols() != bins) throw DataError("embedder: mel bin count does not match the model");
    const Eigen::MatrixXd md = m->cast<double>();
    sum += md.colwise().sum();
    sq += md.array().square().matrix().colwise().sum();
    count += static_cast<double>(md.rows());
  }
  if (count < 2.0) throw DataError("embedder: not enough frames to fit input normalization");
  const Eigen::RowVectorXd mean = sum / count;
  const Eigen::RowVectorXd var = (sq / count - mean.cwiseAbs2()).cwiseMax(1e-6);
  buffers_[kInMean] = mean.cast<S>();
  buffers_[kInScale] = var.cwiseSqrt().cwiseInverse().cast<S>();
}

template <class S>
RowVec<S> SpeakerEmbedderNet<S>::run(const Mat<S>& mel, Trace* trace) const {
  if (mel.cols() != cfg_.mel_bins)
    throw DataError(fmt::format("embedder: input has {} bins, model expects {}", mel.cols(), cfg_.mel_bins));
  if (mel.rows() < 4) throw DataError(fmt::format("embedder: input of {} frames is too short (need 4)", mel.rows()));
  Trace local;
  Trace& tr = trace ? *trace : local;
  tr.x = ((mel.rowwise() - buffers_[kInMean].row(0)).array().rowwise() * buffers_[kInScale].row(0).array()).matrix();
  tr.a1 = strided_conv<S>(tr.x, params_[kConv1W], params_[kConv1B], cfg_.kernel_size).cwiseMax(S(0));
  tr.a2 = strided_conv<S>(tr.a1, params_[kConv2W], params_[kConv2B], cfg_.kernel_size).cwiseMax(S(0));
  tr.pooled = tr.a2.colwise().mean();
  tr.v = tr.pooled * params_[kProjW] + params_[kProjB];
  const S n = tr.v.norm();
  if (!(n > S(0))) throw NumericalError("embedder: zero-norm embedding");
  tr.e = tr.v / n;
  return tr.e;
}

template <class S>
RowVec<S> SpeakerEmbedderNet<S>::embed(const Mat<S>& mel) const {
  return run(mel, nullptr);
}

template <class S>
Mat<S> SpeakerEmbedderNet<S>::frame_activations(const Mat<S>& mel) const {
  Trace tr;
  run(mel, &tr);
  return tr.a2;
}

template <class S>
void SpeakerEmbedderNet<S>::backward(const Trace& tr, const RowVec<S>& d_e, ParameterSet<S>& g) const {
  const S n = tr.v.norm();
  const RowVec<S> d_v = (d_e - tr.e * tr.e.dot(d_e)) / n;
  g[kProjW].noalias() += tr.pooled.transpose() * d_v;
  g[kProjB] += d_v;
  const RowVec<S> d_pooled = d_v * params_[kProjW].transpose();
  Mat<S> d_z2 = d_pooled.replicate(tr.a2.rows(), 1) / static_cast<S>(tr.a2.rows());
  d_z2 = (tr.a2.array() > S(0)).select(d_z2, S(0));
  Mat<S> d_a1;
  strided_conv_backward<S>(tr.a1, params_[kConv2W], cfg_.kernel_size, d_z2, g[kConv2W], g[kConv2B], &d_a1);
  const Mat<S> d_z1 = (tr.a1.array() > S(0)).select(d_a1, S(0));
  strided_conv_backward<S>(tr.x, params_[kConv1W], cfg_.kernel_size, d_z1, g[kConv1W], g[kConv1B], nullptr);
}

template <class S>
double SpeakerEmbedderNet<S>::loss_and_gradients(const std::vector<const Mat<S>*>& mels, int speakers,
                                                 int utterances, ParameterSet<S>* grads) const {
  std::vector<Trace> traces(mels.size());
  Mat<S> e(static_cast<Eigen::Index>(mels.size()), cfg_.embed_dim);
  for (std::size_t i = 0; i < mels.size(); ++i) e.row(static_cast<Eigen::Index>(i)) = run(*mels[i], &traces[i]);
  const auto res = ge2e_loss<S>(e, speakers, utterances, ge2e_w(), ge2e_b());
  if (grads) {
    *grads = params_.zeros_like();
    for (std::size_t i = 0; i < mels.size(); ++i)
      backward(traces[i], res.d_embeddings.row(static_cast<Eigen::Index>(i)), *grads);
    (*grads)[w_index()](0, 0) = res.d_w;
    (*grads)[b_index()](0, 0) = res.d_b;
  }
  return res.loss;
}

template <class S>
std::uint64_t SpeakerEmbedderNet<S>::kink_signature(const std::vector<const Mat<S>*>& mels) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](bool bit) { h = (h ^ (bit ? 1u : 0u)) * 0x100000001b3ULL; };
  for (const auto* m : mels) {
    Trace tr;
    run(*m, &tr);
    for (Eigen::Index i = 0; i < tr.a1.size(); ++i) mix(tr.a1.data()[i] > S(0));
    for (Eigen::Index i = 0; i < tr.a2.size(); ++i) mix(tr.a2.data()[i] > S(0));
  }
  return h;
}

template class SpeakerEmbedderNet<float>;
template class SpeakerEmbedderNet<double>;

Eigen::VectorXf embed(const MelSpectrogram& m, const EmbedderModel& model) {
  return model.embed(m.frames).transpose();
}

Eigen::VectorXf centroid(const std::vector<Eigen::VectorXf>& embeddings) {
  if (embeddings.empty()) throw DataError("centroid: empty embedding set");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(embeddings.front().size());
  for (const auto& e : embeddings) {
    if (e.size() != sum.size()) throw DataError("centroid: embedding dimensions differ");
    sum += e.cast<double>();
  }
  sum /= static_cast<double>(embeddings.size());
  const double n = sum.norm();
  if (n < 1e-8) throw DataError("centroid: mean embedding has zero norm");
  return (sum / n).cast<float>();
}

std::string embeddings_to_csv(const std::vector<std::string>& ids, const std::vector<Eigen::VectorXf>& embeddings) {
  if (ids.size() != embeddings.size()) throw DataError("embeddings_to_csv: id and embedding counts differ");
  if (embeddings.empty()) return "id\n";
  std::string out = "id";
  for (Eigen::Index k = 0; k < embeddings.front().size(); ++k) out += fmt::format(",e{}", k);
  out += "\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (embeddings[i].size() != embeddings.front().size()) throw DataError("embeddings_to_csv: dimensions differ");
    out += ids[i];
    for (Eigen::Index k = 0; k < embeddings[i].size(); ++k) out += fmt::format(",{:.9g}", embeddings[i](k));
    out += "\n";
  }
  return out;
}

namespace {

std::vector<std::string> eligible_speakers(const std::map<std::string, std::vector<Eigen::MatrixXf>>& utts) {
  std::vector<std::string> out;
  for (const auto& [spk, list] : utts)
    if (list.size() >= 2) out.push_back(spk);
  return out;
}

}  // namespace

EmbedderTrainResult train_embedder(const std::map<std::string, std::vector<Eigen::MatrixXf>>& utterances,
                                   const EmbedderConfig& cfg, const EmbedderTrainConfig& train) {
  train.adam.validate();
  const auto speakers = eligible_speakers(utterances);
  if (speakers.size() < 2)
    throw DataError(fmt::format("train_embedder: need at least 2 speakers with 2+ utterances (have {})",
                                speakers.size()));
  if (train.steps < 0) throw UsageError("train_embedder: steps must be non-negative");
  std::size_t min_count = SIZE_MAX;
  for (const auto& s : speakers) min_count = std::min(min_count, utterances.at(s).size());
  const int m = std::clamp(train.utterances_per_speaker, 2, static_cast<int>(min_count));

  EmbedderTrainResult result{EmbedderModel(cfg), {}};
  auto& model = result.model;
  model.initialize(train.seed);
  std::vector<const Eigen::MatrixXf*> all;
  for (const auto& s : speakers)
    for (const auto& mel : utterances.at(s)) all.push_back(&mel);
  model.fit_input_normalization(all);

  AdamState state = AdamState::for_params(model.params());
  std::mt19937_64 rng(train.seed ^ 0xE3B0C442ULL);
  ParameterSet<float> grads;
  for (int step = 0; step < train.steps; ++step) {
    std::vector<const Eigen::MatrixXf*> batch;
    for (const auto& s : speakers) {
      const auto& list = utterances.at(s);
      std::vector<std::size_t> idx(list.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      for (int i = 0; i < m; ++i) batch.push_back(&list[idx[static_cast<std::size_t>(i)]]);
    }
    const double loss = model.loss_and_gradients(batch, static_cast<int>(speakers.size()), m, &grads);
    if (!std::isfinite(loss)) throw NumericalError(fmt::format("train_embedder: non-finite loss at step {}", step));
    result.loss_history.push_back(loss);
    adam_step(model.params(), grads, state, train.adam);
    auto& w = model.params()[model.w_index()](0, 0);
    w = std::max(w, 1e-4f);
  }
  return result;
}

double ge2e_batch_loss(const EmbedderModel& model,
                       const std::map<std::string, std::vector<Eigen::MatrixXf>>& utterances, int per_speaker) {
  const auto speakers = eligible_speakers(utterances);
  std::vector<const Eigen::MatrixXf*> batch;
  for (const auto& s : speakers) {
    const auto& list = utterances.at(s);
    if (static_cast<int>(list.size()) < per_speaker)
      throw DataError(fmt::format("ge2e_batch_loss: speaker '{}' has fewer than {} utterances", s, per_speaker));
    for (int i = 0; i < per_speaker; ++i) batch.push_back(&list[static_cast<std::size_t>(i)]);
  }
  return model.loss_and_gradients(batch, static_cast<int>(speakers.size()), per_speaker, nullptr);
}

}  // namespace vf

#include "cpr/rcvnet.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "cpr/error.hpp"
#include "cpr/rng.hpp"

namespace cpr {

namespace {

constexpr int kFormatVersion = 1;
constexpr std::size_t kLayers = 3;

double softplus(double m) { return std::max(m, 0.0) + std::log1p(std::exp(-std::abs(m))); }

double sigmoid(double m) {
  if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

struct ForwardCache {
  Eigen::MatrixXd u_pre, u, g;
  std::array<Eigen::MatrixXd, kLayers> z, m, a;
  Eigen::RowVectorXd v;
};

Tensor weight_of(std::size_t layer) { return static_cast<Tensor>(2 * layer); }
Tensor bias_of(std::size_t layer) { return static_cast<Tensor>(2 * layer + 1); }

void run_forward(const RcvnetParams& P, const FeatureBatch& b, ForwardCache& fc) {
  const auto w = static_cast<Eigen::Index>(P.shape().width);
  if (b.x.rows() != 3 || b.c.rows() != static_cast<Eigen::Index>(3 * P.shape().embed_dim) ||
      b.x.cols() != b.c.cols()) {
    throw ContractError("feature batch dimensions do not match the network shape");
  }

  fc.u_pre = P.tensor(Tensor::Cond1Weight) * b.c;
  fc.u_pre.colwise() += P.tensor(Tensor::Cond1Bias).col(0);
  fc.u = fc.u_pre.cwiseMax(0.0);
  fc.g = P.tensor(Tensor::Cond2Weight) * fc.u;
  fc.g.colwise() += P.tensor(Tensor::Cond2Bias).col(0);

  const Eigen::MatrixXd* input = &b.x;
  for (std::size_t l = 0; l < kLayers; ++l) {
    const auto gamma = fc.g.middleRows(static_cast<Eigen::Index>(2 * l) * w, w);
    const auto beta = fc.g.middleRows(static_cast<Eigen::Index>(2 * l + 1) * w, w);
    fc.z[l] = P.tensor(weight_of(l)) * (*input);
    fc.z[l].colwise() += P.tensor(bias_of(l)).col(0);
    fc.m[l] = fc.z[l].cwiseProduct((gamma.array() + 1.0).matrix()) + beta;
    fc.a[l] = fc.m[l].cwiseMax(0.0);
    input = &fc.a[l];
  }

  const Eigen::RowVectorXd residual =
      (P.tensor(Tensor::HeadWeight) * fc.a[kLayers - 1]).array() + P.tensor(Tensor::HeadBias)(0, 0);
  const Eigen::RowVectorXd semantic = -(b.x.row(0) + b.x.row(1)) / 2.0;
  fc.v = semantic + residual;
}

// Accumulates dLoss/dparams given dLoss/dV for every column.
void run_backward(const RcvnetParams& P, const FeatureBatch& b, const ForwardCache& fc,
                  const Eigen::RowVectorXd& grad_v, RcvnetParams& grad) {
  const auto w = static_cast<Eigen::Index>(P.shape().width);
  grad.tensor(Tensor::HeadWeight) += grad_v * fc.a[kLayers - 1].transpose();
  grad.tensor(Tensor::HeadBias)(0, 0) += grad_v.sum();

  Eigen::MatrixXd d_a = P.tensor(Tensor::HeadWeight).transpose() * grad_v;
  Eigen::MatrixXd d_g(fc.g.rows(), fc.g.cols());
  for (std::size_t l = kLayers; l-- > 0;) {
    const auto gamma = fc.g.middleRows(static_cast<Eigen::Index>(2 * l) * w, w);
    const Eigen::MatrixXd d_m = d_a.cwiseProduct((fc.m[l].array() > 0.0).cast<double>().matrix());
    d_g.middleRows(static_cast<Eigen::Index>(2 * l) * w, w) = d_m.cwiseProduct(fc.z[l]);
    d_g.middleRows(static_cast<Eigen::Index>(2 * l + 1) * w, w) = d_m;
    const Eigen::MatrixXd d_z = d_m.cwiseProduct((gamma.array() + 1.0).matrix());
    const Eigen::MatrixXd& input = l == 0 ? b.x : fc.a[l - 1];
    grad.tensor(weight_of(l)) += d_z * input.transpose();
    grad.tensor(bias_of(l)) += d_z.rowwise().sum();
    if (l > 0) d_a = P.tensor(weight_of(l)).transpose() * d_z;
  }

  grad.tensor(Tensor::Cond2Weight) += d_g * fc.u.transpose();
  grad.tensor(Tensor::Cond2Bias) += d_g.rowwise().sum();
  const Eigen::MatrixXd d_u_pre = (P.tensor(Tensor::Cond2Weight).transpose() * d_g)
                                      .cwiseProduct((fc.u_pre.array() > 0.0).cast<double>().matrix());
  grad.tensor(Tensor::Cond1Weight) += d_u_pre * b.c.transpose();
  grad.tensor(Tensor::Cond1Bias) += d_u_pre.rowwise().sum();
}

FeatureBatch gather(const FeatureBatch& src, std::span<const std::size_t> cols) {
  FeatureBatch out;
  out.x.resize(src.x.rows(), static_cast<Eigen::Index>(cols.size()));
  out.c.resize(src.c.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const auto src_col = static_cast<Eigen::Index>(cols[j]);
    out.x.col(jj) = src.x.col(src_col);
    out.c.col(jj) = src.c.col(src_col);
  }
  return out;
}

}  // namespace

std::vector<double> film_modulate(std::span<const double> h, std::span<const double> gamma,
                                  std::span<const double> beta) {
  if (h.size() != gamma.size() || h.size() != beta.size()) {
    throw ContractError("film_modulate: hidden, scale and shift must have equal length");
  }
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = h[i] * (1.0 + gamma[i]) + beta[i];
  return out;
}

std::vector<TensorSlot> tensor_layout(const RcvnetShape& shape) {
  const std::size_t w = shape.width;
  const std::size_t c = 3 * shape.embed_dim;
  std::vector<TensorSlot> slots = {
      {"fc1.weight", w, 3},       {"fc1.bias", w, 1},   {"fc2.weight", w, w},        {"fc2.bias", w, 1},
      {"fc3.weight", w, w},       {"fc3.bias", w, 1},   {"head.weight", 1, w},       {"head.bias", 1, 1},
      {"cond1.weight", w, c},     {"cond1.bias", w, 1}, {"cond2.weight", 6 * w, w},  {"cond2.bias", 6 * w, 1},
  };
  constexpr std::size_t kLine = 64 / sizeof(double);
  std::size_t offset = 0;
  for (TensorSlot& s : slots) {
    s.offset = offset;
    offset += (s.size() + kLine - 1) / kLine * kLine;
  }
  return slots;
}

RcvnetParams::RcvnetParams(const RcvnetShape& shape) : shape_(shape), layout_(tensor_layout(shape)) {
  if (shape.width == 0 || shape.embed_dim == 0) throw ConfigError("network width and embedding dim must be positive");
  data_.assign(layout_.back().offset + layout_.back().size(), 0.0);
}

RcvnetParams RcvnetParams::initialize(const RcvnetShape& shape, std::uint64_t seed) {
  RcvnetParams p(shape);
  Rng rng(seed);
  auto he = [&](Tensor t, double fan_in) {
    auto m = p.tensor(t);
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal() * std_dev;
    }
  };
  he(Tensor::Fc1Weight, 3.0);
  he(Tensor::Fc2Weight, static_cast<double>(shape.width));
  he(Tensor::Fc3Weight, static_cast<double>(shape.width));
  he(Tensor::Cond1Weight, static_cast<double>(3 * shape.embed_dim));
  return p;
}

RcvnetParams::MatrixMap RcvnetParams::tensor(Tensor t) {
  const TensorSlot& s = layout_.at(static_cast<std::size_t>(t));
  return MatrixMap(data_.data() + s.offset, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
}

RcvnetParams::ConstMatrixMap RcvnetParams::tensor(Tensor t) const {
  const TensorSlot& s = layout_.at(static_cast<std::size_t>(t));
  return ConstMatrixMap(data_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                        static_cast<Eigen::Index>(s.cols));
}

Eigen::VectorXd forward_batch(const RcvnetParams& params, const FeatureBatch& batch) {
  ForwardCache fc;
  run_forward(params, batch, fc);
  return fc.v.transpose();
}

double forward(const RcvnetParams& params, const ScalarFeatures& x, std::span<const double> c) {
  if (c.size() != 3 * params.shape().embed_dim) {
    throw ContractError("context vector has " + std::to_string(c.size()) + " entries, network expects " +
                        std::to_string(3 * params.shape().embed_dim));
  }
  FeatureBatch b;
  b.x.resize(3, 1);
  b.x << x.s_local, x.s_path, x.rho_last;
  b.c = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  return forward_batch(params, b)(0);
}

double pair_loss(double v_pos, double v_neg) { return softplus(v_pos - v_neg); }

LossAndGradient loss_and_gradient(const RcvnetParams& params, const FeatureBatch& pos, const FeatureBatch& neg) {
  const Eigen::Index n = pos.x.cols();
  if (n == 0 || neg.x.cols() != n) throw ContractError("loss_and_gradient needs a non-empty batch of pairs");
  ForwardCache fp, fn;
  run_forward(params, pos, fp);
  run_forward(params, neg, fn);

  LossAndGradient out;
  Eigen::RowVectorXd g_pos(n), g_neg(n);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double margin = fp.v(i) - fn.v(i);
    out.loss += softplus(margin);
    const double s = sigmoid(margin) / static_cast<double>(n);
    g_pos(i) = s;
    g_neg(i) = -s;
    if (fp.v(i) < fn.v(i)) ++correct;
  }
  out.loss /= static_cast<double>(n);
  out.accuracy = static_cast<double>(correct) / static_cast<double>(n);

  RcvnetParams grad(params.shape());
  run_backward(params, pos, fp, g_pos, grad);
  run_backward(params, neg, fn, g_neg, grad);
  out.gradient.assign(grad.data().begin(), grad.data().end());
  return out;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: parameter, gradient and state sizes differ");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

ScalarFeatures FeatureExtractor::features(const Embedding& question, const Path& p) const {
  if (p.empty()) throw ContractError("features need a path with at least one hop");
  const RelationId last = p.last_relation();
  return {similarity(question, index_->relation(last)), similarity(question, index_->path(p)), prior_->rho(last)};
}

std::vector<double> FeatureExtractor::context(const Embedding& question, const Path& p) const {
  if (p.empty()) throw ContractError("context needs a path with at least one hop");
  const Embedding& rel = index_->relation(p.last_relation());
  const Embedding& path = index_->path(p);
  std::vector<double> c;
  c.reserve(question.size() + rel.size() + path.size());
  c.insert(c.end(), question.begin(), question.end());
  c.insert(c.end(), rel.begin(), rel.end());
  c.insert(c.end(), path.begin(), path.end());
  return c;
}

PairDataset build_pair_dataset(const FeatureExtractor& fx, const std::vector<Query>& queries,
                               const std::vector<PathPairSet>& sets) {
  std::map<std::string, const Query*> by_id;
  for (const Query& q : queries) by_id[q.id] = &q;

  std::size_t n = 0;
  for (const PathPairSet& s : sets) n += s.pairs.size();
  const auto d3 = static_cast<Eigen::Index>(3 * fx.index().dimension());
  PairDataset data;
  data.pos.x.resize(3, static_cast<Eigen::Index>(n));
  data.neg.x.resize(3, static_cast<Eigen::Index>(n));
  data.pos.c.resize(d3, static_cast<Eigen::Index>(n));
  data.neg.c.resize(d3, static_cast<Eigen::Index>(n));

  auto fill = [&](FeatureBatch& b, Eigen::Index col, const Embedding& question, const Path& p) {
    const ScalarFeatures x = fx.features(question, p);
    b.x.col(col) << x.s_local, x.s_path, x.rho_last;
    const auto c = fx.context(question, p);
    b.c.col(col) = Eigen::Map<const Eigen::VectorXd>(c.data(), d3);
  };

  Eigen::Index col = 0;
  for (const PathPairSet& s : sets) {
    if (s.pairs.empty()) continue;
    auto it = by_id.find(s.query_id);
    if (it == by_id.end()) throw LookupError("pair set for unknown query '" + s.query_id + "'");
    const Embedding& question = fx.index().text(query_text(*it->second));
    for (const auto& [pi, ni] : s.pairs) {
      fill(data.pos, col, question, s.positives[pi]);
      fill(data.neg, col, question, s.negatives[ni]);
      ++col;
    }
  }
  return data;
}

TrainResult train(const PairDataset& data, const RcvnetShape& shape, const TrainConfig& cfg) {
  const std::size_t n = data.size();
  if (n == 0) throw TrainingError("no training pairs");
  if (cfg.batch_size == 0 || cfg.epochs == 0 || !(cfg.learning_rate > 0.0)) {
    throw ConfigError("learning rate, batch size and epochs must be positive");
  }
  if (data.pos.c.rows() != static_cast<Eigen::Index>(3 * shape.embed_dim)) {
    throw ConfigError("pair features have context size " + std::to_string(data.pos.c.rows()) +
                      ", network expects " + std::to_string(3 * shape.embed_dim));
  }

  TrainResult result;
  result.params = RcvnetParams::initialize(shape, derive_seed(cfg.seed, 0x696e6974ULL));
  AdamState adam(result.params.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch));
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    double correct = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      const std::span<const std::size_t> cols(order.data() + start, len);
      const FeatureBatch pos = gather(data.pos, cols);
      const FeatureBatch neg = gather(data.neg, cols);
      const LossAndGradient lg = loss_and_gradient(result.params, pos, neg);
      loss_sum += lg.loss * static_cast<double>(len);
      correct += lg.accuracy * static_cast<double>(len);
      adam_step(result.params.data(), lg.gradient, adam, cfg.learning_rate);
    }
    result.log.push_back({epoch, loss_sum / static_cast<double>(n), correct / static_cast<double>(n)});
  }
  return result;
}

void write_train_log_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  std::ostringstream s;
  s.precision(17);
  s << "epoch,mean_loss,pairwise_accuracy\n";
  for (const EpochLog& e : log) s << e.epoch << ',' << e.mean_loss << ',' << e.pairwise_accuracy << '\n';
  out << s.str();
}

void save_params(std::ostream& out, const RcvnetParams& params) {
  std::ostringstream s;
  s.precision(17);
  s << "rcvnet-params " << kFormatVersion << '\n';
  s << "embed_dim " << params.shape().embed_dim << " width " << params.shape().width << '\n';
  const auto data = params.data();
  for (const TensorSlot& slot : params.layout()) {
    s << "tensor " << slot.name << ' ' << slot.rows << ' ' << slot.cols << '\n';
    for (std::size_t i = 0; i < slot.size(); ++i) s << (i ? " " : "") << data[slot.offset + i];
    s << '\n';
  }
  s << "end\n";
  out << s.str();
}

RcvnetParams load_params(std::istream& in, std::size_t expected_embed_dim) {
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "rcvnet-params") throw LoadError("not an rcvnet parameter file");
  if (version != kFormatVersion) {
    throw LoadError("parameter format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kFormatVersion) + ")");
  }
  RcvnetShape shape;
  std::string k1, k2;
  if (!(in >> k1 >> shape.embed_dim >> k2 >> shape.width) || k1 != "embed_dim" || k2 != "width") {
    throw LoadError("parameter file: malformed shape line");
  }
  if (expected_embed_dim != 0 && shape.embed_dim != expected_embed_dim) {
    throw LoadError("parameter file embedding dim " + std::to_string(shape.embed_dim) +
                    " does not match runtime embedding dim " + std::to_string(expected_embed_dim));
  }
  RcvnetParams params(shape);
  auto data = params.data();
  for (const TensorSlot& slot : params.layout()) {
    std::string tag, name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> tag >> name >> rows >> cols) || tag != "tensor") {
      throw LoadError("parameter file truncated before tensor '" + slot.name + "'");
    }
    if (name != slot.name || rows != slot.rows || cols != slot.cols) {
      throw LoadError("parameter file tensor '" + name + "' does not match expected '" + slot.name + "' " +
                      std::to_string(slot.rows) + "x" + std::to_string(slot.cols));
    }
    for (std::size_t i = 0; i < slot.size(); ++i) {
      if (!(in >> data[slot.offset + i])) throw LoadError("parameter file truncated inside '" + slot.name + "'");
    }
  }
  if (!(in >> word) || word != "end") throw LoadError("parameter file truncated: missing end marker");
  return params;
}

void save_params_file(const std::string& path, const RcvnetParams& params) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write parameter file '" + path + "'");
  save_params(out, params);
}

RcvnetParams load_params_file(const std::string& path, std::size_t expected_embed_dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open parameter file '" + path + "'", true);
  return load_params(in, expected_embed_dim);
}

PathScorer::PathScorer(const FeatureExtractor& fx, const Query& q, const RcvnetParams* params)
    : fx_(&fx), params_(params), question_(&fx.index().text(query_text(q))) {
  if (params_ && params_->shape().embed_dim != fx.index().dimension()) {
    throw ConfigError("network embedding dim " + std::to_string(params_->shape().embed_dim) +
                      " does not match provider dim " + std::to_string(fx.index().dimension()));
  }
}

double PathScorer::score(const Path& p) {
  auto key = p.relations();
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  const ScalarFeatures x = fx_->features(*question_, p);
  const double v = params_ ? forward(*params_, x, fx_->context(*question_, p)) : v_sem(x);
  memo_.emplace(std::move(key), v);
  return v;
}

}  // namespace cpr

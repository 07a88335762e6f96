#pragma once

// Residual value network. A path's cost is the semantic baseline plus a
// residual from a 3-layer ReLU MLP over the scalar features, whose hidden
// pre-activations are FiLM-modulated by a 2-layer conditioner over the
// concatenated (question, last relation, path) embeddings:
//
//   V(p) = v_sem(x) + head(a3)
//   a_l  = relu((W_l a_{l-1} + b_l) * (1 + gamma_l) + beta_l),  a_0 = x
//   [gamma_1, beta_1, ..., gamma_3, beta_3] = C2 relu(C1 c + cb1) + cb2
//
// The head and the conditioner output layer start at zero, so a freshly
// initialized network reproduces v_sem exactly. All math is in double.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "cpr/embed.hpp"
#include "cpr/puct.hpp"

namespace cpr {

struct ScalarFeatures {
  double s_local = 0.0;   // s(question, last relation)
  double s_path = 0.0;    // s(question, relation text of the path)
  double rho_last = 0.5;  // Beta posterior mean of the last relation
};

/// Semantic cost -(s_local + s_path) / 2; lower is more query-aligned.
inline double v_sem(const ScalarFeatures& x) { return -(x.s_local + x.s_path) / 2.0; }

/// Elementwise h * (1 + gamma) + beta. Throws ContractError on shape mismatch.
std::vector<double> film_modulate(std::span<const double> h, std::span<const double> gamma,
                                  std::span<const double> beta);

struct RcvnetShape {
  std::size_t embed_dim = 64;  // d; the context vector has 3d entries
  std::size_t width = 256;     // hidden width of the MLP and the conditioner
  bool operator==(const RcvnetShape&) const = default;
};

/// Named slice of the flat parameter vector, column-major rows x cols.
/// Offsets are padded to whole 64-byte lines so every tensor starts at the
/// same alignment; otherwise Eigen's vectorized reductions round differently
/// depending on where the buffer happens to land.
struct TensorSlot {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return rows * cols; }
};

/// Allocates on 64-byte boundaries regardless of the SIMD level Eigen was
/// configured for.
template <class T>
struct LineAllocator {
  using value_type = T;
  LineAllocator() = default;
  template <class U>
  LineAllocator(const LineAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{64})); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{64}); }
  template <class U>
  bool operator==(const LineAllocator<U>&) const noexcept { return true; }
};

enum class Tensor : std::size_t {
  Fc1Weight, Fc1Bias, Fc2Weight, Fc2Bias, Fc3Weight, Fc3Bias,
  HeadWeight, HeadBias,
  Cond1Weight, Cond1Bias, Cond2Weight, Cond2Bias,
  Count
};

std::vector<TensorSlot> tensor_layout(const RcvnetShape& shape);

class RcvnetParams {
 public:
  using MatrixMap = Eigen::Map<Eigen::MatrixXd, Eigen::Aligned64>;
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd, Eigen::Aligned64>;

  RcvnetParams() = default;
  explicit RcvnetParams(const RcvnetShape& shape);  // all zeros

  /// He-normal hidden and conditioner-input weights, zero biases, zero head,
  /// zero conditioner output layer.
  static RcvnetParams initialize(const RcvnetShape& shape, std::uint64_t seed);

  const RcvnetShape& shape() const { return shape_; }
  const std::vector<TensorSlot>& layout() const { return layout_; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  MatrixMap tensor(Tensor t);
  ConstMatrixMap tensor(Tensor t) const;

  bool operator==(const RcvnetParams& other) const { return shape_ == other.shape_ && data_ == other.data_; }

 private:
  RcvnetShape shape_;
  std::vector<TensorSlot> layout_;
  std::vector<double, LineAllocator<double>> data_;
};

/// Feature columns for a batch of paths: x is 3 x n, c is 3d x n.
struct FeatureBatch {
  Eigen::MatrixXd x;
  Eigen::MatrixXd c;
};

/// V for every column of the batch.
Eigen::VectorXd forward_batch(const RcvnetParams& params, const FeatureBatch& batch);

/// V(p) for one path. Throws ContractError when c.size() != 3d.
double forward(const RcvnetParams& params, const ScalarFeatures& x, std::span<const double> c);

/// softplus(v_pos - v_neg), stable for large margins.
double pair_loss(double v_pos, double v_neg);

struct LossAndGradient {
  double loss = 0.0;             // mean pair loss
  double accuracy = 0.0;         // fraction with V+ < V-
  std::vector<double> gradient;  // same layout as the parameters
};

/// Exact gradient of the mean pair loss over columns (pos_i, neg_i).
LossAndGradient loss_and_gradient(const RcvnetParams& params, const FeatureBatch& pos, const FeatureBatch& neg);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

/// Builds x(p) and c(p) from embeddings and the relation prior.
class FeatureExtractor {
 public:
  FeatureExtractor(const SemanticIndex& index, const BetaPrior& prior) : index_(&index), prior_(&prior) {}

  /// Throws ContractError for zero-step paths.
  ScalarFeatures features(const Embedding& question, const Path& p) const;
  /// concat(question, last relation, path text) embeddings.
  std::vector<double> context(const Embedding& question, const Path& p) const;

  const SemanticIndex& index() const { return *index_; }

 private:
  const SemanticIndex* index_;
  const BetaPrior* prior_;
};

struct TrainConfig {
  double learning_rate = 5e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 6;
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double pairwise_accuracy = 0.0;
};

struct TrainResult {
  RcvnetParams params;
  std::vector<EpochLog> log;
};

/// Training pairs with precomputed features, one column per path.
struct PairDataset {
  FeatureBatch pos;
  FeatureBatch neg;
  std::size_t size() const { return static_cast<std::size_t>(pos.x.cols()); }
};

PairDataset build_pair_dataset(const FeatureExtractor& fx, const std::vector<Query>& queries,
                               const std::vector<PathPairSet>& sets);

/// Seeded shuffle each epoch, mini-batches of cfg.batch_size, Adam. Throws
/// TrainingError when there are no pairs.
TrainResult train(const PairDataset& data, const RcvnetShape& shape, const TrainConfig& cfg);

void write_train_log_csv(std::ostream& out, const std::vector<EpochLog>& log);

/// Text format: version line, shape line, then one line per tensor holding
/// its name, dimensions and values at 17 significant digits.
void save_params(std::ostream& out, const RcvnetParams& params);
/// Throws LoadError on truncation, version mismatch, or when the file's
/// embedding dimension differs from `expected_embed_dim` (if nonzero).
RcvnetParams load_params(std::istream& in, std::size_t expected_embed_dim = 0);
void save_params_file(const std::string& path, const RcvnetParams& params);
RcvnetParams load_params_file(const std::string& path, std::size_t expected_embed_dim = 0);

/// Scores paths of one query. Without parameters it returns the semantic
/// baseline. Path costs depend only on the relation sequence, so results are
/// memoized per sequence.
class PathScorer {
 public:
  PathScorer(const FeatureExtractor& fx, const Query& q, const RcvnetParams* params);

  double score(const Path& p);

 private:
  const FeatureExtractor* fx_;
  const RcvnetParams* params_;
  const Embedding* question_;
  std::map<std::vector<RelationId>, double> memo_;
};

}  // namespace cpr

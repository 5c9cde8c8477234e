#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "harl/common.hpp"

namespace harl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { identity, relu, tanh };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

// Samples are columns: inputs are (in_dim x batch), outputs (out_dim x batch).
class Mlp {
 public:
  struct Cache {
    std::vector<Mat> h;  // h[0] = input (empty when onehot is set), h[l + 1] = layer l
    // Hot index per column when every input column is a one-hot vector.
    std::vector<int> onehot;
  };

  Mlp() = default;
  // widths = {in, hidden..., out}. Hidden layers use `hidden`, the last one
  // `output`. Orthogonal init; hidden layers get gain sqrt(2) for relu and 1
  // otherwise, the last layer gets `output_gain`. Biases start at zero.
  Mlp(std::vector<int> widths, Activation hidden, Activation output, double output_gain,
      Rng& rng);

  int in_dim() const { return widths_.front(); }
  int out_dim() const { return widths_.back(); }
  int n_layers() const { return static_cast<int>(widths_.size()) - 1; }
  int n_params() const { return static_cast<int>(params_.size()); }
  const std::vector<int>& widths() const { return widths_; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }

  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  Eigen::Map<const Mat> weight(int layer) const;
  Eigen::Map<Mat> weight(int layer);
  Eigen::Map<const Vec> bias(int layer) const;

  Mat forward(const Mat& x, Cache* cache = nullptr) const;
  // Adds dLoss/dparams (summed over the batch) to `grad`. Returns dLoss/dx
  // when `want_input_grad` is set, otherwise an empty matrix.
  Mat backward(const Cache& cache, const Mat& dy, Vec& grad, bool want_input_grad = false) const;
  // Forward-mode derivative of the outputs along parameter direction v.
  Mat jvp(const Cache& cache, const Vec& v) const;

 private:
  Activation layer_activation(int l) const { return l + 1 == n_layers() ? output_ : hidden_; }

  std::vector<int> widths_;
  std::vector<int> w_offset_;
  std::vector<int> b_offset_;
  Activation hidden_ = Activation::relu;
  Activation output_ = Activation::identity;
  Vec params_;
};

// Q with Q^T Q = gain^2 I (rows <= cols: orthonormal rows scaled by gain).
Mat orthogonal_matrix(int rows, int cols, double gain, Rng& rng);

struct Categorical {
  static Mat probs(const Mat& logits);
  static Mat log_probs(const Mat& logits);
  // Analytic KL(p || q) with logs floored at 1e-12.
  static double kl(const Vec& p, const Vec& q);
  static double entropy(const Vec& p);
};

// Softmax policy on top of an Mlp that emits logits.
class CategoricalPolicy {
 public:
  CategoricalPolicy() = default;
  CategoricalPolicy(int obs_dim, std::vector<int> hidden, int n_actions, Activation act,
                    double output_gain, Rng& rng);

  int n_actions() const { return net_.out_dim(); }
  int n_params() const { return net_.n_params(); }
  Vec get_params() const { return net_.params(); }
  void set_params(const Vec& p) { net_.params() = p; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  Mat probs(const Mat& obs) const;
  // log pi(a_b | s_b) for integer actions stored as doubles in row 0.
  Vec log_prob(const Mat& obs, const Mat& actions) const;
  // sum_b w_b grad log pi(a_b | s_b).
  Vec grad_log_prob(const Mat& obs, const Mat& actions, const Vec& weights) const;
  // Mean entropy over the batch and its gradient.
  double entropy(const Mat& obs, Vec* grad) const;
  // Mean over the batch of KL(old_b || pi(.|s_b)); old is (A x batch).
  double mean_kl(const Mat& obs, const Mat& old_probs) const;
  // H v with H the Hessian of the mean KL at the current parameters.
  Vec fisher_vector_product(const Mat& obs, const Vec& v) const;

  int sample(const Vec& obs, Rng& rng, double* log_prob = nullptr) const;

 private:
  Mlp net_;
};

// Gaussian with state-independent log-std. Parameters: [mlp params, log_std].
// With squashing the environment receives low + (tanh(u) + 1) / 2 * (high - low)
// while log-probabilities refer to the raw sample u.
class DiagGaussianPolicy {
 public:
  DiagGaussianPolicy() = default;
  DiagGaussianPolicy(int obs_dim, std::vector<int> hidden, int act_dim, Activation act,
                     double output_gain, double init_log_std, bool squash, double low,
                     double high, Rng& rng);

  int act_dim() const { return net_.out_dim(); }
  int n_params() const { return net_.n_params() + act_dim(); }
  Vec get_params() const;
  void set_params(const Vec& p);
  const Vec& log_std() const { return log_std_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  bool squash() const { return squash_; }

  Mat mean(const Mat& obs) const { return net_.forward(obs); }
  Vec log_prob(const Mat& obs, const Mat& actions) const;
  Vec grad_log_prob(const Mat& obs, const Mat& actions, const Vec& weights) const;
  double entropy(const Mat& obs, Vec* grad) const;
  // old_mean is (d x batch), old_log_std (d).
  double mean_kl(const Mat& obs, const Mat& old_mean, const Vec& old_log_std) const;
  Vec fisher_vector_product(const Mat& obs, const Vec& v) const;

  Vec sample(const Vec& obs, Rng& rng, double* log_prob = nullptr) const;
  Vec to_env(const Vec& raw) const;

  static double kl(const Vec& mean_p, const Vec& log_std_p, const Vec& mean_q,
                   const Vec& log_std_q);

 private:
  Mlp net_;
  Vec log_std_;
  bool squash_ = false;
  double low_ = -1.0;
  double high_ = 1.0;
};

// mu(s) = centre + half_range * tanh(mlp(s)), inside [low, high].
class DeterministicPolicy {
 public:
  DeterministicPolicy() = default;
  DeterministicPolicy(int obs_dim, std::vector<int> hidden, int act_dim, Activation act,
                      double output_gain, double low, double high, Rng& rng);

  int act_dim() const { return net_.out_dim(); }
  int n_params() const { return net_.n_params(); }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  double low() const { return low_; }
  double high() const { return high_; }

  Mat act(const Mat& obs, Mlp::Cache* cache = nullptr) const;
  // sum_b dL/da_b . da_b/dtheta for the given action gradients.
  Vec backprop(const Mlp::Cache& cache, const Mat& action_grad) const;

 private:
  Mlp net_;
  double low_ = -1.0;
  double high_ = 1.0;
};

// Q(s, .) = V(s) + A(s, .) - mean(A(s, .)), with separate value and advantage
// streams.
class DuelingNet {
 public:
  DuelingNet() = default;
  DuelingNet(int obs_dim, std::vector<int> v_hidden, std::vector<int> a_hidden, int n_actions,
             Activation act, Rng& rng);

  int n_actions() const { return a_.out_dim(); }
  int n_params() const { return v_.n_params() + a_.n_params(); }
  Vec get_params() const;
  void set_params(const Vec& p);

  const Mlp& value_net() const { return v_; }
  const Mlp& advantage_net() const { return a_; }

  static Mat aggregate(const Mat& v, const Mat& a);
  Mat q_values(const Mat& obs) const;
  // Gradient of 0.5 * mean_b (Q(s_b, a_b) - y_b)^2. Returns the loss.
  double td_gradient(const Mat& obs, const std::vector<int>& actions, const Vec& targets,
                     Vec& grad) const;

 private:
  Mlp v_;
  Mlp a_;
};

struct AdamState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-5;
  long step = 0;
  Vec m;
  Vec v;

  AdamState() = default;
  AdamState(int n, double lr_, double eps_ = 1e-5);
  // Gradient-descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
  void update(Vec& params, const Vec& grad);
};

// Rescales grad to have norm at most max_norm; returns the pre-clip norm.
double clip_grad_norm(Vec& grad, double max_norm);

double huber(double residual, double delta);
double huber_grad(double residual, double delta);

// JSON manifest plus a flat little-endian float64 file holding `blocks`
// back to back.
struct CheckpointBlock {
  std::string name;
  std::vector<int> widths;
  std::string hidden_activation;
  std::string output_activation;
  int extra = 0;  // trailing parameters after the mlp, e.g. log-std
  Vec params;
};

void save_checkpoint(const std::string& manifest_path, const std::string& binary_path,
                     const std::vector<CheckpointBlock>& blocks, std::uint64_t seed,
                     const std::string& extra_json = "{}");
std::vector<CheckpointBlock> load_checkpoint(const std::string& manifest_path,
                                             std::string* extra_json = nullptr);

}  // namespace harl

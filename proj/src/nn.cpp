#include "harl/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace harl {

Activation activation_from_name(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  fail(ErrorCode::config, "unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

Mat orthogonal_matrix(int rows, int cols, double gain, Rng& rng) {
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  Mat g(big, small);
  for (int j = 0; j < small; ++j)
    for (int i = 0; i < big; ++i) g(i, j) = normal01(rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(big, small);
  Mat r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  Mat out = rows >= cols ? q : Mat(q.transpose());
  return gain * out;
}

namespace {

void apply_activation(Activation a, Mat& z) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
  }
}

// Derivative expressed through the layer output h.
void scale_by_derivative(Activation a, const Mat& h, Mat& g) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: g = (h.array() > 0.0).select(g, 0.0); break;
    case Activation::tanh: g.array() *= (1.0 - h.array().square()); break;
  }
}

// Fills idx with the hot row of every column when x is one-hot.
bool onehot_columns(const Mat& x, std::vector<int>& idx) {
  idx.assign(x.cols(), -1);
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    const double* col = x.data() + b * x.rows();
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      if (col[r] == 0.0) continue;
      if (col[r] != 1.0 || idx[b] >= 0) {
        idx.clear();
        return false;
      }
      idx[b] = static_cast<int>(r);
    }
    if (idx[b] < 0) {
      idx.clear();
      return false;
    }
  }
  return true;
}

}  // namespace

Mlp::Mlp(std::vector<int> widths, Activation hidden, Activation output, double output_gain,
         Rng& rng)
    : widths_(std::move(widths)), hidden_(hidden), output_(output) {
  require(widths_.size() >= 2, "mlp needs input and output widths");
  for (int w : widths_) require(w >= 1, "layer widths must be positive");
  int total = 0;
  for (int l = 0; l < n_layers(); ++l) {
    w_offset_.push_back(total);
    total += widths_[l + 1] * widths_[l];
    b_offset_.push_back(total);
    total += widths_[l + 1];
  }
  params_ = Vec::Zero(total);
  for (int l = 0; l < n_layers(); ++l) {
    double gain = l + 1 == n_layers() ? output_gain
                                      : (hidden == Activation::relu ? std::sqrt(2.0) : 1.0);
    weight(l) = orthogonal_matrix(widths_[l + 1], widths_[l], gain, rng);
  }
}

Eigen::Map<const Mat> Mlp::weight(int l) const {
  return {params_.data() + w_offset_[l], widths_[l + 1], widths_[l]};
}

Eigen::Map<Mat> Mlp::weight(int l) {
  return {params_.data() + w_offset_[l], widths_[l + 1], widths_[l]};
}

Eigen::Map<const Vec> Mlp::bias(int l) const {
  return {params_.data() + b_offset_[l], widths_[l + 1]};
}

Mat Mlp::forward(const Mat& x, Cache* cache) const {
  require(x.rows() == in_dim(), "mlp input has the wrong dimension");
  std::vector<int> hot;
  const bool sparse = onehot_columns(x, hot);
  if (cache) {
    cache->h.resize(n_layers() + 1);
    // One-hot inputs are kept as indices only.
    if (sparse)
      cache->h[0].resize(0, 0);
    else
      cache->h[0] = x;
  }
  Mat h;
  for (int l = 0; l < n_layers(); ++l) {
    Mat z;
    if (l == 0 && sparse) {
      z.resize(widths_[1], x.cols());
      auto w = weight(0);
      for (Eigen::Index b = 0; b < x.cols(); ++b) z.col(b) = w.col(hot[b]);
    } else {
      z = weight(l) * (l == 0 ? x : h);
    }
    z.colwise() += bias(l);
    apply_activation(layer_activation(l), z);
    h = std::move(z);
    if (cache) cache->h[l + 1] = h;
  }
  if (cache) cache->onehot = std::move(hot);
  return h;
}

Mat Mlp::backward(const Cache& cache, const Mat& dy, Vec& grad, bool want_input_grad) const {
  require(grad.size() == n_params(), "gradient buffer has the wrong size");
  Mat g = dy;
  for (int l = n_layers() - 1; l >= 0; --l) {
    scale_by_derivative(layer_activation(l), cache.h[l + 1], g);
    Eigen::Map<Mat> gw(grad.data() + w_offset_[l], widths_[l + 1], widths_[l]);
    Eigen::Map<Vec> gb(grad.data() + b_offset_[l], widths_[l + 1]);
    if (l == 0 && !cache.onehot.empty()) {
      for (Eigen::Index b = 0; b < g.cols(); ++b) gw.col(cache.onehot[b]) += g.col(b);
    } else {
      gw.noalias() += g * cache.h[l].transpose();
    }
    gb += g.rowwise().sum();
    if (l > 0 || want_input_grad) g = weight(l).transpose() * g;
  }
  return want_input_grad ? g : Mat();
}

Mat Mlp::jvp(const Cache& cache, const Vec& v) const {
  require(v.size() == n_params(), "direction has the wrong size");
  Mat dh;  // derivative of the previous layer output; zero for the input
  for (int l = 0; l < n_layers(); ++l) {
    Eigen::Map<const Mat> vw(v.data() + w_offset_[l], widths_[l + 1], widths_[l]);
    Eigen::Map<const Vec> vb(v.data() + b_offset_[l], widths_[l + 1]);
    Mat dz;
    if (l == 0 && !cache.onehot.empty()) {
      dz.resize(widths_[1], static_cast<Eigen::Index>(cache.onehot.size()));
      for (Eigen::Index b = 0; b < dz.cols(); ++b) dz.col(b) = vw.col(cache.onehot[b]);
    } else {
      dz = vw * cache.h[l];
    }
    dz.colwise() += vb;
    if (l > 0) dz.noalias() += weight(l) * dh;
    scale_by_derivative(layer_activation(l), cache.h[l + 1], dz);
    dh = std::move(dz);
  }
  return dh;
}

// ---- categorical ----

Mat Categorical::log_probs(const Mat& logits) {
  Mat out = logits;
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    double m = logits.col(b).maxCoeff();
    double lse = m + std::log((logits.col(b).array() - m).exp().sum());
    out.col(b).array() -= lse;
  }
  return out;
}

Mat Categorical::probs(const Mat& logits) { return log_probs(logits).array().exp().matrix(); }

double Categorical::kl(const Vec& p, const Vec& q) {
  double kl = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0) continue;
    kl += p[a] * (std::log(std::max(p[a], 1e-12)) - std::log(std::max(q[a], 1e-12)));
  }
  return kl;
}

double Categorical::entropy(const Vec& p) {
  double h = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a)
    if (p[a] > 0.0) h -= p[a] * std::log(p[a]);
  return h;
}

CategoricalPolicy::CategoricalPolicy(int obs_dim, std::vector<int> hidden, int n_actions,
                                     Activation act, double output_gain, Rng& rng) {
  std::vector<int> widths{obs_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(n_actions);
  net_ = Mlp(widths, act, Activation::identity, output_gain, rng);
}

Mat CategoricalPolicy::probs(const Mat& obs) const { return Categorical::probs(net_.forward(obs)); }

Vec CategoricalPolicy::log_prob(const Mat& obs, const Mat& actions) const {
  Mat lp = Categorical::log_probs(net_.forward(obs));
  Vec out(obs.cols());
  for (Eigen::Index b = 0; b < obs.cols(); ++b) out[b] = lp(static_cast<int>(actions(0, b)), b);
  return out;
}

Vec CategoricalPolicy::grad_log_prob(const Mat& obs, const Mat& actions,
                                     const Vec& weights) const {
  Mlp::Cache cache;
  Mat p = Categorical::probs(net_.forward(obs, &cache));
  Mat d = -p;
  for (Eigen::Index b = 0; b < obs.cols(); ++b) {
    int a = static_cast<int>(actions(0, b));
    if (p(a, b) <= 0.0) fail(ErrorCode::numeric, "action has zero probability");
    d(a, b) += 1.0;
    d.col(b) *= weights[b];
  }
  Vec grad = Vec::Zero(n_params());
  net_.backward(cache, d, grad);
  return grad;
}

double CategoricalPolicy::entropy(const Mat& obs, Vec* grad) const {
  Mlp::Cache cache;
  Mat lp = Categorical::log_probs(net_.forward(obs, &cache));
  Mat p = lp.array().exp().matrix();
  const double inv_b = 1.0 / static_cast<double>(obs.cols());
  double total = 0.0;
  Mat d(p.rows(), p.cols());
  for (Eigen::Index b = 0; b < obs.cols(); ++b) {
    double h = -(p.col(b).array() * lp.col(b).array()).sum();
    total += h;
    d.col(b) = (-p.col(b).array() * (lp.col(b).array() + h)).matrix() * inv_b;
  }
  if (grad) {
    *grad = Vec::Zero(n_params());
    net_.backward(cache, d, *grad);
  }
  return total * inv_b;
}

double CategoricalPolicy::mean_kl(const Mat& obs, const Mat& old_probs) const {
  Mat lp = Categorical::log_probs(net_.forward(obs));
  double total = 0.0;
  for (Eigen::Index b = 0; b < obs.cols(); ++b) {
    for (Eigen::Index a = 0; a < lp.rows(); ++a) {
      double po = old_probs(a, b);
      if (po <= 0.0) continue;
      total += po * (std::log(std::max(po, 1e-12)) - std::max(lp(a, b), std::log(1e-12)));
    }
  }
  return total / static_cast<double>(obs.cols());
}

Vec CategoricalPolicy::fisher_vector_product(const Mat& obs, const Vec& v) const {
  require(v.size() == n_params(), "fisher_vector_product dimension mismatch");
  Mlp::Cache cache;
  Mat p = Categorical::probs(net_.forward(obs, &cache));
  Mat u = net_.jvp(cache, v);
  const double inv_b = 1.0 / static_cast<double>(obs.cols());
  Mat w(u.rows(), u.cols());
  for (Eigen::Index b = 0; b < u.cols(); ++b) {
    double pu = p.col(b).dot(u.col(b));
    w.col(b) = (p.col(b).array() * (u.col(b).array() - pu)).matrix() * inv_b;
  }
  Vec out = Vec::Zero(n_params());
  net_.backward(cache, w, out);
  return out;
}

int CategoricalPolicy::sample(const Vec& obs, Rng& rng, double* log_prob) const {
  Vec p = Categorical::probs(net_.forward(obs));
  int a = sample_index(std::span<const double>(p.data(), p.size()), rng);
  if (log_prob) *log_prob = std::log(p[a]);
  return a;
}

// ---- gaussian ----

DiagGaussianPolicy::DiagGaussianPolicy(int obs_dim, std::vector<int> hidden, int act_dim,
                                       Activation act, double output_gain, double init_log_std,
                                       bool squash, double low, double high, Rng& rng)
    : log_std_(Vec::Constant(act_dim, init_log_std)), squash_(squash), low_(low), high_(high) {
  std::vector<int> widths{obs_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(act_dim);
  net_ = Mlp(widths, act, Activation::identity, output_gain, rng);
}

Vec DiagGaussianPolicy::get_params() const {
  Vec p(n_params());
  p << net_.params(), log_std_;
  return p;
}

void DiagGaussianPolicy::set_params(const Vec& p) {
  require(p.size() == n_params(), "parameter vector has the wrong size");
  net_.params() = p.head(net_.n_params());
  log_std_ = p.tail(act_dim());
}

namespace {
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * M_PI);
}

Vec DiagGaussianPolicy::log_prob(const Mat& obs, const Mat& actions) const {
  Mat mu = net_.forward(obs);
  Vec out(obs.cols());
  for (Eigen::Index b = 0; b < obs.cols(); ++b) {
    double lp = 0.0;
    for (int d = 0; d < act_dim(); ++d) {
      double z = (actions(d, b) - mu(d, b)) * std::exp(-log_std_[d]);
      lp += -0.5 * z * z - log_std_[d] - kLogSqrt2Pi;
    }
    out[b] = lp;
  }
  return out;
}

Vec DiagGaussianPolicy::grad_log_prob(const Mat& obs, const Mat& actions,
                                      const Vec& weights) const {
  Mlp::Cache cache;
  Mat mu = net_.forward(obs, &cache);
  Mat dmu(mu.rows(), mu.cols());
  Vec dls = Vec::Zero(act_dim());
  for (Eigen::Index b = 0; b < obs.cols(); ++b) {
    for (int d = 0; d < act_dim(); ++d) {
      double inv_var = std::exp(-2.0 * log_std_[d]);
      double diff = actions(d, b) - mu(d, b);
      dmu(d, b) = weights[b] * diff * inv_var;
      dls[d] += weights[b] * (diff * diff * inv_var - 1.0);
    }
  }
  Vec grad = Vec::Zero(n_params());
  Vec gnet = Vec::Zero(net_.n_params());
  net_.backward(cache, dmu, gnet);
  grad << gnet, dls;
  return grad;
}

double DiagGaussianPolicy::entropy(const Mat& obs, Vec* grad) const {
  (void)obs;
  double h = 0.0;
  for (int d = 0; d < act_dim(); ++d) h += log_std_[d] + 0.5 * std::log(2.0 * M_PI * M_E);
  if (grad) {
    *grad = Vec::Zero(n_params());
    grad->tail(act_dim()).setOnes();
  }
  return h;
}

double DiagGaussianPolicy::kl(const Vec& mean_p, const Vec& log_std_p, const Vec& mean_q,
                              const Vec& log_std_q) {
  double kl = 0.0;
  for (Eigen::Index d = 0; d < mean_p.size(); ++d) {
    double var_p = std::exp(2.0 * log_std_p[d]);
    double var_q = std::exp(2.0 * log_std_q[d]);
    double diff = mean_p[d] - mean_q[d];
    kl += log_std_q[d] - log_std_p[d] + (var_p + diff * diff) / (2.0 * var_q) - 0.5;
  }
  return kl;
}

double DiagGaussianPolicy::mean_kl(const Mat& obs, const Mat& old_mean,
                                   const Vec& old_log_std) const {
  Mat mu = net_.forward(obs);
  double total = 0.0;
  for (Eigen::Index b = 0; b < obs.cols(); ++b)
    total += kl(old_mean.col(b), old_log_std, mu.col(b), log_std_);
  return total / static_cast<double>(obs.cols());
}

Vec DiagGaussianPolicy::fisher_vector_product(const Mat& obs, const Vec& v) const {
  require(v.size() == n_params(), "fisher_vector_product dimension mismatch");
  Mlp::Cache cache;
  net_.forward(obs, &cache);
  Vec vnet = v.head(net_.n_params());
  Mat u = net_.jvp(cache, vnet);
  const double inv_b = 1.0 / static_cast<double>(obs.cols());
  for (int d = 0; d < act_dim(); ++d) u.row(d) *= std::exp(-2.0 * log_std_[d]) * inv_b;
  Vec gnet = Vec::Zero(net_.n_params());
  net_.backward(cache, u, gnet);
  Vec out(n_params());
  out << gnet, 2.0 * v.tail(act_dim());
  return out;
}

Vec DiagGaussianPolicy::sample(const Vec& obs, Rng& rng, double* log_prob) const {
  Vec mu = net_.forward(obs);
  Vec u(act_dim());
  double lp = 0.0;
  for (int d = 0; d < act_dim(); ++d) {
    double z = normal01(rng);
    u[d] = mu[d] + std::exp(log_std_[d]) * z;
    lp += -0.5 * z * z - log_std_[d] - kLogSqrt2Pi;
  }
  if (log_prob) *log_prob = lp;
  return u;
}

Vec DiagGaussianPolicy::to_env(const Vec& raw) const {
  if (squash_)
    return (low_ + ((raw.array().tanh() + 1.0) * 0.5 * (high_ - low_))).matrix();
  return raw.cwiseMax(low_).cwiseMin(high_);
}

// ---- deterministic ----

DeterministicPolicy::DeterministicPolicy(int obs_dim, std::vector<int> hidden, int act_dim,
                                         Activation act, double output_gain, double low,
                                         double high, Rng& rng)
    : low_(low), high_(high) {
  require(high > low, "action bounds must satisfy low < high");
  std::vector<int> widths{obs_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(act_dim);
  net_ = Mlp(widths, act, Activation::tanh, output_gain, rng);
}

Mat DeterministicPolicy::act(const Mat& obs, Mlp::Cache* cache) const {
  Mat y = net_.forward(obs, cache);
  return ((y.array() * 0.5 * (high_ - low_)) + 0.5 * (high_ + low_)).matrix();
}

Vec DeterministicPolicy::backprop(const Mlp::Cache& cache, const Mat& action_grad) const {
  Vec grad = Vec::Zero(n_params());
  net_.backward(cache, action_grad * (0.5 * (high_ - low_)), grad);
  return grad;
}

// ---- dueling ----

DuelingNet::DuelingNet(int obs_dim, std::vector<int> v_hidden, std::vector<int> a_hidden,
                       int n_actions, Activation act, Rng& rng) {
  std::vector<int> vw{obs_dim}, aw{obs_dim};
  vw.insert(vw.end(), v_hidden.begin(), v_hidden.end());
  vw.push_back(1);
  aw.insert(aw.end(), a_hidden.begin(), a_hidden.end());
  aw.push_back(n_actions);
  v_ = Mlp(vw, act, Activation::identity, 1.0, rng);
  a_ = Mlp(aw, act, Activation::identity, 1.0, rng);
}

Vec DuelingNet::get_params() const {
  Vec p(n_params());
  p << v_.params(), a_.params();
  return p;
}

void DuelingNet::set_params(const Vec& p) {
  require(p.size() == n_params(), "parameter vector has the wrong size");
  v_.params() = p.head(v_.n_params());
  a_.params() = p.tail(a_.n_params());
}

Mat DuelingNet::aggregate(const Mat& v, const Mat& a) {
  Mat q = a;
  for (Eigen::Index b = 0; b < a.cols(); ++b) q.col(b).array() += v(0, b) - a.col(b).mean();
  return q;
}

Mat DuelingNet::q_values(const Mat& obs) const { return aggregate(v_.forward(obs), a_.forward(obs)); }

double DuelingNet::td_gradient(const Mat& obs, const std::vector<int>& actions,
                               const Vec& targets, Vec& grad) const {
  Mlp::Cache cv, ca;
  Mat v = v_.forward(obs, &cv);
  Mat a = a_.forward(obs, &ca);
  Mat q = aggregate(v, a);
  const Eigen::Index B = obs.cols();
  const double inv_b = 1.0 / static_cast<double>(B);
  const double inv_n = 1.0 / static_cast<double>(a.rows());
  Mat dv(1, B);
  Mat da(a.rows(), B);
  double loss = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    double err = q(actions[b], b) - targets[b];
    loss += 0.5 * err * err;
    double g = err * inv_b;
    dv(0, b) = g;
    da.col(b).setConstant(-g * inv_n);
    da(actions[b], b) += g;
  }
  Vec gv = Vec::Zero(v_.n_params());
  Vec ga = Vec::Zero(a_.n_params());
  v_.backward(cv, dv, gv);
  a_.backward(ca, da, ga);
  grad.resize(n_params());
  grad << gv, ga;
  return loss * inv_b;
}

// ---- optimizers ----

AdamState::AdamState(int n, double lr_, double eps_)
    : lr(lr_), eps(eps_), m(Vec::Zero(n)), v(Vec::Zero(n)) {}

void AdamState::update(Vec& params, const Vec& grad) {
  require(grad.size() == params.size() && m.size() == params.size(), "adam shape mismatch");
  ++step;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

double clip_grad_norm(Vec& grad, double max_norm) {
  double norm = grad.norm();
  if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

double huber(double r, double delta) {
  double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_grad(double r, double delta) {
  if (r > delta) return delta;
  if (r < -delta) return -delta;
  return r;
}

// ---- checkpoints ----

void save_checkpoint(const std::string& manifest_path, const std::string& binary_path,
                     const std::vector<CheckpointBlock>& blocks, std::uint64_t seed,
                     const std::string& extra_json) {
  nlohmann::json doc;
  doc["format"] = "harl-checkpoint-1";
  doc["dtype"] = "float64-le";
  doc["seed"] = seed;
  doc["binary"] = std::filesystem::path(binary_path).filename().string();
  nlohmann::json nets = nlohmann::json::array();
  long offset = 0;
  std::ofstream bin(binary_path, std::ios::binary);
  if (!bin) fail(ErrorCode::io, "cannot write '" + binary_path + "'");
  for (const auto& b : blocks) {
    nets.push_back({{"name", b.name},
                    {"widths", b.widths},
                    {"hidden_activation", b.hidden_activation},
                    {"output_activation", b.output_activation},
                    {"extra", b.extra},
                    {"offset", offset},
                    {"size", b.params.size()}});
    for (Eigen::Index k = 0; k < b.params.size(); ++k) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(b.params[k]);
      unsigned char bytes[8];
      for (int j = 0; j < 8; ++j) bytes[j] = static_cast<unsigned char>(bits >> (8 * j));
      bin.write(reinterpret_cast<const char*>(bytes), 8);
    }
    offset += b.params.size();
  }
  if (!bin) fail(ErrorCode::io, "write failed for '" + binary_path + "'");
  doc["networks"] = std::move(nets);
  doc["extra"] = nlohmann::json::parse(extra_json);
  std::ofstream man(manifest_path);
  if (!man) fail(ErrorCode::io, "cannot write '" + manifest_path + "'");
  man << doc.dump(2) << "\n";
}

std::vector<CheckpointBlock> load_checkpoint(const std::string& manifest_path,
                                             std::string* extra_json) {
  std::ifstream man(manifest_path);
  if (!man) fail(ErrorCode::io, "cannot open '" + manifest_path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(man);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("bad checkpoint manifest: ") + e.what());
  }
  auto dir = std::filesystem::path(manifest_path).parent_path();
  auto bin_path = dir / doc.at("binary").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) fail(ErrorCode::io, "cannot open '" + bin_path.string() + "'");
  std::vector<CheckpointBlock> out;
  for (const auto& n : doc.at("networks")) {
    CheckpointBlock b;
    b.name = n.at("name").get<std::string>();
    b.widths = n.at("widths").get<std::vector<int>>();
    b.hidden_activation = n.at("hidden_activation").get<std::string>();
    b.output_activation = n.at("output_activation").get<std::string>();
    b.extra = n.at("extra").get<int>();
    long size = n.at("size").get<long>();
    long offset = n.at("offset").get<long>();
    b.params.resize(size);
    bin.seekg(offset * 8);
    for (long k = 0; k < size; ++k) {
      unsigned char bytes[8];
      bin.read(reinterpret_cast<char*>(bytes), 8);
      if (!bin) fail(ErrorCode::io, "checkpoint binary is truncated");
      std::uint64_t bits = 0;
      for (int j = 0; j < 8; ++j) bits |= static_cast<std::uint64_t>(bytes[j]) << (8 * j);
      b.params[k] = std::bit_cast<double>(bits);
    }
    out.push_back(std::move(b));
  }
  if (extra_json) *extra_json = doc.contains("extra") ? doc["extra"].dump() : "{}";
  return out;
}

}  // namespace harl

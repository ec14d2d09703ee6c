#include "incdyn/checkpoint.hpp"

#include <array>
#include <fstream>

namespace incdyn {

namespace {

constexpr std::array<char, 8> kModelTag{'I', 'N', 'C', 'M', 'O', 'D', 'L', '1'};
constexpr std::array<char, 8> kPolicyTag{'I', 'N', 'C', 'P', 'O', 'L', 'Y', '1'};
constexpr std::array<char, 8> kCriticTag{'I', 'N', 'C', 'C', 'R', 'I', 'T', '1'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  }
  void finish() {
    out_.flush();
    if (!out_) throw Error(Errc::io, "write failed: " + path_.string());
  }

  void tag(const std::array<char, 8>& t) { out_.write(t.data(), t.size()); }
  void u64(std::uint64_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void f64(double v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void vec(const Vec& v) { for (double x : v) f64(x); }
  void mat(const Mat& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index j = 0; j < M.cols(); ++j) f64(M(i, j));
  }
  void mask(const std::vector<bool>& bits) {
    u64(bits.size());
    for (bool b : bits) u64(b ? 1 : 0);
  }
  void mlp(const MlpParams& net) {
    u64(static_cast<std::uint64_t>(net.activation));
    u64(net.layers.size() + 1);
    u64(static_cast<std::uint64_t>(net.in_dim()));
    for (const auto& layer : net.layers) u64(static_cast<std::uint64_t>(layer.weight.rows()));
    for (const auto& layer : net.layers) {
      mat(layer.weight);
      vec(layer.bias);
    }
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error(Errc::missing_file, "cannot open " + path.string());
  }

  void expect_tag(const std::array<char, 8>& t) {
    std::array<char, 8> got{};
    in_.read(got.data(), got.size());
    check();
    if (got != t) throw Error(Errc::malformed_line, path_.string() + " is not the expected checkpoint type");
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  double f64() {
    double v = 0.0;
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::uint64_t bounded(std::uint64_t limit) {
    const std::uint64_t v = u64();
    if (v > limit) throw Error(Errc::malformed_line, path_.string() + ": implausible header value");
    return v;
  }
  Vec vec(Eigen::Index n) {
    Vec v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  Mat mat(Eigen::Index rows, Eigen::Index cols) {
    Mat M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = f64();
    return M;
  }
  std::vector<bool> mask() {
    std::vector<bool> bits(bounded(1 << 20));
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = u64() != 0;
    return bits;
  }
  MlpParams mlp() {
    MlpParams net;
    net.activation = static_cast<Activation>(bounded(1));
    const auto count = bounded(64);
    if (count < 2) throw Error(Errc::malformed_line, path_.string() + ": network needs >= 2 sizes");
    std::vector<Eigen::Index> sizes(count);
    for (auto& s : sizes) s = static_cast<Eigen::Index>(bounded(1 << 20));
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
      DenseLayer layer;
      layer.weight = mat(sizes[k + 1], sizes[k]);
      layer.bias = vec(sizes[k + 1]);
      net.layers.push_back(std::move(layer));
    }
    return net;
  }

 private:
  void check() {
    if (!in_) throw Error(Errc::malformed_line, "truncated checkpoint " + path_.string());
  }
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void save_model(const std::filesystem::path& path, const IncrementalModel& model) {
  validate(model);
  Writer w(path);
  w.tag(kModelTag);
  w.u64(static_cast<std::uint64_t>(model.n));
  w.u64(static_cast<std::uint64_t>(model.m));
  w.u64(static_cast<std::uint64_t>(model.mode));
  w.u64(static_cast<std::uint64_t>(model.input));
  w.mask(model.angular);
  w.mlp(model.net);
  w.u64(model.prior_L0 ? 1 : 0);
  if (model.prior_L0) w.mat(*model.prior_L0);
  w.finish();
}

IncrementalModel load_model(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_tag(kModelTag);
  IncrementalModel model;
  model.n = static_cast<int>(r.bounded(1 << 20));
  model.m = static_cast<int>(r.bounded(1 << 20));
  model.mode = static_cast<LMode>(r.bounded(1));
  model.input = static_cast<ModelInput>(r.bounded(1));
  model.angular = r.mask();
  model.net = r.mlp();
  if (r.bounded(1) == 1) model.prior_L0 = r.mat(model.n, model.m);
  validate(model);
  return model;
}

void save_policy(const std::filesystem::path& path, const GaussianPolicy& policy) {
  Writer w(path);
  w.tag(kPolicyTag);
  w.u64(static_cast<std::uint64_t>(policy.action_dim()));
  w.vec(policy.action_scale);
  w.vec(policy.action_offset);
  w.mask(policy.angular);
  w.mlp(policy.net);
  w.finish();
}

GaussianPolicy load_policy(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_tag(kPolicyTag);
  GaussianPolicy policy;
  const auto m = static_cast<Eigen::Index>(r.bounded(1 << 20));
  policy.action_scale = r.vec(m);
  policy.action_offset = r.vec(m);
  policy.angular = r.mask();
  policy.net = r.mlp();
  if (policy.net.out_dim() != 2 * m) throw Error(Errc::malformed_line, "policy output size mismatch");
  return policy;
}

void save_critic(const std::filesystem::path& path, const Critic& critic) {
  Writer w(path);
  w.tag(kCriticTag);
  w.u64(static_cast<std::uint64_t>(critic.action_scale.size()));
  w.vec(critic.action_scale);
  w.vec(critic.action_offset);
  w.mask(critic.angular);
  w.mlp(critic.q1);
  w.mlp(critic.q2);
  w.mlp(critic.q1_target);
  w.mlp(critic.q2_target);
  w.finish();
}

Critic load_critic(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_tag(kCriticTag);
  Critic critic;
  const auto m = static_cast<Eigen::Index>(r.bounded(1 << 20));
  critic.action_scale = r.vec(m);
  critic.action_offset = r.vec(m);
  critic.angular = r.mask();
  critic.q1 = r.mlp();
  critic.q2 = r.mlp();
  critic.q1_target = r.mlp();
  critic.q2_target = r.mlp();
  return critic;
}

}  // namespace incdyn

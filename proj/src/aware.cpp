#include "upmnet/aware.hpp"

#include <cmath>
#include <random>

#include "upmnet/error.hpp"

namespace upmnet {

namespace {

Matrix affine(const Matrix& x, const Linear& layer) {
  Matrix y = x * layer.weight.transpose();
  y.rowwise() += layer.bias.transpose();
  return y;
}

Linear xavier(std::mt19937_64& rng, int out, int in) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-a, a);
  Linear layer{Matrix(out, in), Vector::Zero(out)};
  for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
  return layer;
}

Linear zeros_like(const Linear& layer) {
  return Linear{Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())};
}

void check_batch(const AwareBatch& batch, int in_dim, int k) {
  if (batch.num_parts() != k)
    throw Error(ErrorCode::PartCountMismatch, "batch has " + std::to_string(batch.num_parts()) + " parts, expected " + std::to_string(k));
  if (batch.global.cols() != in_dim) throw Error(ErrorCode::DimMismatch, "global feature dim " + std::to_string(batch.global.cols()));
  for (const auto& p : batch.parts) {
    if (p.cols() != in_dim || p.rows() != batch.batch_size()) throw Error(ErrorCode::DimMismatch, "part feature shape");
  }
}

void add_view(std::vector<ParamView>& views, std::string name, Matrix& m) {
  views.push_back(ParamView{std::move(name), m.data(), static_cast<std::size_t>(m.size())});
}

void add_view(std::vector<ParamView>& views, std::string name, Vector& v) {
  views.push_back(ParamView{std::move(name), v.data(), static_cast<std::size_t>(v.size())});
}

}  // namespace

AwareKind parse_aware_kind(std::string_view name) {
  if (name == "local") return AwareKind::Local;
  if (name == "global") return AwareKind::Global;
  throw Error(ErrorCode::InvalidConfig, "unknown aware kind '" + std::string(name) + "'");
}

std::string_view to_string(AwareKind kind) { return kind == AwareKind::Local ? "local" : "global"; }

AwareBatch make_batch(std::span<const PartFeatures> items) {
  if (items.empty()) throw Error(ErrorCode::ShapeMismatch, "empty batch");
  const auto rows = static_cast<Eigen::Index>(items.size());
  const auto dim = items.front().global.size();
  const auto k = items.front().parts.size();
  AwareBatch batch{Matrix(rows, dim), std::vector<Matrix>(k, Matrix(rows, dim))};
  for (Eigen::Index b = 0; b < rows; ++b) {
    const auto& item = items[static_cast<std::size_t>(b)];
    if (item.global.size() != dim || item.parts.size() != k) throw Error(ErrorCode::ShapeMismatch, "ragged batch");
    batch.global.row(b) = item.global.transpose();
    for (std::size_t i = 0; i < k; ++i) {
      if (item.parts[i].size() != dim) throw Error(ErrorCode::ShapeMismatch, "ragged batch");
      batch.parts[i].row(b) = item.parts[i].transpose();
    }
  }
  return batch;
}

GlobalAwareParams init_params(int in_dim, int reduced_dim, int k, std::uint64_t seed, bool independent_global_proj) {
  if (in_dim < 1 || reduced_dim < 1 || k < 1) throw Error(ErrorCode::InvalidConfig, "init_params: dims must be >= 1");
  std::mt19937_64 rng(seed);
  GlobalAwareParams p;
  p.in_dim = in_dim;
  p.reduced_dim = reduced_dim;
  const int globals = independent_global_proj ? k : 1;
  for (int g = 0; g < globals; ++g) p.global_proj.push_back(xavier(rng, reduced_dim, in_dim));
  for (int i = 0; i < k; ++i) {
    p.part_proj.push_back(xavier(rng, reduced_dim, in_dim));
    p.fuse.push_back(xavier(rng, reduced_dim, 2 * reduced_dim));
    p.norm.push_back(BatchNorm{Vector::Ones(reduced_dim), Vector::Zero(reduced_dim), Vector::Zero(reduced_dim),
                               Vector::Ones(reduced_dim)});
  }
  return p;
}

std::vector<Matrix> local_aware_forward(const AwareBatch& batch) { return batch.parts; }

GlobalAwareOutput global_aware_forward(const AwareBatch& batch, const GlobalAwareParams& params, Mode mode) {
  const int k = params.num_parts();
  const Eigen::Index c_red = params.reduced_dim;
  check_batch(batch, params.in_dim, k);
  const Eigen::Index rows = batch.batch_size();
  if (mode == Mode::Train && rows < 2) throw Error(ErrorCode::NormDegenerate, "train-mode normalization needs batch >= 2");

  GlobalAwareOutput out;
  GlobalAwareCache& cache = out.cache;
  cache.valid = true;
  cache.mode = mode;
  cache.input = batch;
  for (const auto& g : params.global_proj) cache.global_reduced.push_back(affine(batch.global, g));

  for (int i = 0; i < k; ++i) {
    const Matrix& global_reduced = cache.global_reduced[params.independent_global_proj() ? i : 0];
    Matrix z(rows, 2 * c_red);
    z.leftCols(c_red) = affine(batch.parts[i], params.part_proj[i]);
    z.rightCols(c_red) = global_reduced;
    const Matrix u = affine(z, params.fuse[i]);

    Vector mean, var;
    if (mode == Mode::Train) {
      mean = u.colwise().mean().transpose();
      var = (u.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
    } else {
      mean = params.norm[i].running_mean;
      var = params.norm[i].running_var;
    }
    const Vector inv_std = (var.array() + kBatchNormEpsilon).rsqrt().matrix();
    Matrix normalized = ((u.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array()).matrix();
    Matrix pre_relu = (normalized.array().rowwise() * params.norm[i].gamma.transpose().array()).matrix();
    pre_relu.rowwise() += params.norm[i].beta.transpose();

    out.features.push_back(pre_relu.cwiseMax(0.0) + global_reduced);

    cache.concat.push_back(std::move(z));
    cache.normalized.push_back(std::move(normalized));
    cache.pre_relu.push_back(std::move(pre_relu));
    cache.inv_std.push_back(inv_std);
    cache.batch_mean.push_back(std::move(mean));
    cache.batch_var.push_back(std::move(var));
  }
  return out;
}

GlobalAwareGrads global_aware_backward(const GlobalAwareCache& cache, const GlobalAwareParams& params,
                                       std::span<const Matrix> upstream) {
  if (!cache.valid) throw Error(ErrorCode::MissingCache, "global_aware_backward called without a forward cache");
  const int k = params.num_parts();
  const Eigen::Index c_red = params.reduced_dim;
  const Eigen::Index rows = cache.input.batch_size();
  if (static_cast<int>(upstream.size()) != k) throw Error(ErrorCode::PartCountMismatch, "upstream gradient count");

  GlobalAwareGrads grads;
  GlobalAwareParams& g = grads.params;
  g.in_dim = params.in_dim;
  g.reduced_dim = params.reduced_dim;
  for (const auto& layer : params.global_proj) g.global_proj.push_back(zeros_like(layer));
  std::vector<Matrix> d_global_reduced(params.global_proj.size(), Matrix::Zero(rows, c_red));

  for (int i = 0; i < k; ++i) {
    const Matrix& up = upstream[static_cast<std::size_t>(i)];
    if (up.rows() != rows || up.cols() != c_red) throw Error(ErrorCode::ShapeMismatch, "upstream gradient shape");
    Matrix& d_gr = d_global_reduced[params.independent_global_proj() ? i : 0];
    d_gr += up;

    const Matrix d_pre = (cache.pre_relu[i].array() > 0.0).select(up.array(), 0.0).matrix();
    const Matrix& normalized = cache.normalized[i];
    BatchNorm d_norm{(d_pre.array() * normalized.array()).colwise().sum().transpose(), d_pre.colwise().sum().transpose(),
                     Vector::Zero(c_red), Vector::Zero(c_red)};
    const Matrix d_normalized = (d_pre.array().rowwise() * params.norm[i].gamma.transpose().array()).matrix();

    Matrix d_u;
    if (cache.mode == Mode::Train) {
      const Eigen::RowVectorXd mean_d = d_normalized.colwise().mean();
      const Eigen::RowVectorXd mean_dn = (d_normalized.array() * normalized.array()).colwise().mean().matrix();
      Matrix centered = d_normalized.rowwise() - mean_d;
      centered -= (normalized.array().rowwise() * mean_dn.array()).matrix();
      d_u = (centered.array().rowwise() * cache.inv_std[i].transpose().array()).matrix();
    } else {
      d_u = (d_normalized.array().rowwise() * cache.inv_std[i].transpose().array()).matrix();
    }

    Linear d_fuse{d_u.transpose() * cache.concat[i], d_u.colwise().sum().transpose()};
    const Matrix d_z = d_u * params.fuse[i].weight;
    const Matrix d_part_reduced = d_z.leftCols(c_red);
    d_gr += d_z.rightCols(c_red);

    const Matrix& x_part = cache.input.parts[i];
    g.part_proj.push_back(Linear{d_part_reduced.transpose() * x_part, d_part_reduced.colwise().sum().transpose()});
    grads.d_parts.push_back(d_part_reduced * params.part_proj[i].weight);
    g.fuse.push_back(std::move(d_fuse));
    g.norm.push_back(std::move(d_norm));
  }

  grads.d_global = Matrix::Zero(rows, params.in_dim);
  for (std::size_t gi = 0; gi < params.global_proj.size(); ++gi) {
    g.global_proj[gi].weight = d_global_reduced[gi].transpose() * cache.input.global;
    g.global_proj[gi].bias = d_global_reduced[gi].colwise().sum().transpose();
    grads.d_global += d_global_reduced[gi] * params.global_proj[gi].weight;
  }
  return grads;
}

void update_running_stats(GlobalAwareParams& params, const GlobalAwareCache& cache) {
  if (!cache.valid || cache.mode != Mode::Train) return;
  const double rows = static_cast<double>(cache.input.batch_size());
  const double bessel = rows / (rows - 1.0);
  for (int i = 0; i < params.num_parts(); ++i) {
    auto& norm = params.norm[i];
    norm.running_mean = kBatchNormMomentum * norm.running_mean + (1.0 - kBatchNormMomentum) * cache.batch_mean[i];
    norm.running_var = kBatchNormMomentum * norm.running_var + (1.0 - kBatchNormMomentum) * bessel * cache.batch_var[i];
  }
}

LocalAdapter init_local_adapter(int dim, int k) {
  LocalAdapter adapter;
  for (int i = 0; i < k; ++i) adapter.parts.push_back(Linear{Matrix::Identity(dim, dim), Vector::Zero(dim)});
  return adapter;
}

std::vector<Matrix> local_adapter_forward(const LocalAdapter& adapter, const AwareBatch& batch) {
  if (adapter.parts.size() != batch.parts.size()) throw Error(ErrorCode::PartCountMismatch, "local adapter part count");
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < batch.parts.size(); ++i) {
    if (batch.parts[i].cols() != adapter.parts[i].weight.cols()) throw Error(ErrorCode::DimMismatch, "local adapter input dim");
    out.push_back(affine(batch.parts[i], adapter.parts[i]));
  }
  return out;
}

LocalAdapter local_adapter_backward(const LocalAdapter& adapter, const AwareBatch& batch, std::span<const Matrix> upstream) {
  if (upstream.size() != adapter.parts.size()) throw Error(ErrorCode::PartCountMismatch, "upstream gradient count");
  LocalAdapter grads;
  for (std::size_t i = 0; i < adapter.parts.size(); ++i)
    grads.parts.push_back(Linear{upstream[i].transpose() * batch.parts[i], upstream[i].colwise().sum().transpose()});
  return grads;
}

Matrix normalize_rows(const Matrix& x) {
  Matrix y = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double norm = x.row(r).norm();
    if (norm < kNormEpsilon) y.row(r).setZero();
    else y.row(r) /= norm;
  }
  return y;
}

Matrix normalize_rows_backward(const Matrix& x, const Matrix& upstream) {
  Matrix d = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double norm = x.row(r).norm();
    if (norm < kNormEpsilon) continue;
    const Eigen::RowVectorXd y = x.row(r) / norm;
    d.row(r) = (upstream.row(r) - y * upstream.row(r).dot(y)) / norm;
  }
  return d;
}

std::vector<ParamView> trainable_views(GlobalAwareParams& p) {
  std::vector<ParamView> views;
  for (std::size_t g = 0; g < p.global_proj.size(); ++g) {
    add_view(views, "global_proj." + std::to_string(g) + ".weight", p.global_proj[g].weight);
    add_view(views, "global_proj." + std::to_string(g) + ".bias", p.global_proj[g].bias);
  }
  for (int i = 0; i < p.num_parts(); ++i) {
    const std::string part = "part" + std::to_string(i + 1);
    add_view(views, part + ".proj.weight", p.part_proj[i].weight);
    add_view(views, part + ".proj.bias", p.part_proj[i].bias);
    add_view(views, part + ".fuse.weight", p.fuse[i].weight);
    add_view(views, part + ".fuse.bias", p.fuse[i].bias);
    add_view(views, part + ".norm.gamma", p.norm[i].gamma);
    add_view(views, part + ".norm.beta", p.norm[i].beta);
  }
  return views;
}

std::vector<ParamView> trainable_views(LocalAdapter& adapter) {
  std::vector<ParamView> views;
  for (std::size_t i = 0; i < adapter.parts.size(); ++i) {
    const std::string part = "part" + std::to_string(i + 1);
    add_view(views, part + ".adapter.weight", adapter.parts[i].weight);
    add_view(views, part + ".adapter.bias", adapter.parts[i].bias);
  }
  return views;
}

}  // namespace upmnet

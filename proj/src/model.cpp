#include "upmnet/model.hpp"

#include "upmnet/error.hpp"

namespace upmnet {

namespace {

void add(std::vector<NamedTensor>& out, std::string name, Matrix& m) {
  out.push_back(NamedTensor{std::move(name), m.data(), m.rows(), m.cols()});
}

void add(std::vector<NamedTensor>& out, std::string name, Vector& v) {
  out.push_back(NamedTensor{std::move(name), v.data(), v.size(), 1});
}

}  // namespace

AwareModel make_model(const ModelShape& shape, std::uint64_t seed) {
  if (shape.k < 1 || shape.in_dim < 1) throw Error(ErrorCode::InvalidConfig, "model needs k >= 1 and in_dim >= 1");
  AwareModel model;
  model.kind = shape.kind;
  model.k = shape.k;
  model.in_dim = shape.in_dim;
  if (shape.kind == AwareKind::Global) {
    model.global = init_params(shape.in_dim, shape.reduced_dim, shape.k, seed, shape.independent_global_proj);
  } else if (shape.local_adapter) {
    model.adapter = init_local_adapter(shape.in_dim, shape.k);
  }
  return model;
}

ModelForward model_forward(const AwareModel& model, const AwareBatch& batch, Mode mode) {
  if (batch.num_parts() != model.k) throw Error(ErrorCode::PartCountMismatch, "batch parts vs model k");
  ModelForward out;
  if (model.kind == AwareKind::Global) {
    auto fwd = global_aware_forward(batch, model.global, mode);
    out.raw = std::move(fwd.features);
    out.cache = std::move(fwd.cache);
  } else if (model.adapter) {
    out.raw = local_adapter_forward(*model.adapter, batch);
  } else {
    out.raw = local_aware_forward(batch);
  }
  return out;
}

std::vector<Matrix> model_infer(const AwareModel& model, const AwareBatch& batch) {
  auto fwd = model_forward(model, batch, Mode::Infer);
  std::vector<Matrix> out;
  out.reserve(fwd.raw.size());
  for (const auto& m : fwd.raw) out.push_back(normalize_rows(m));
  return out;
}

std::vector<ParamView> trainable_views(AwareModel& model) {
  if (model.kind == AwareKind::Global) return trainable_views(model.global);
  if (model.adapter) return trainable_views(*model.adapter);
  return {};
}

std::vector<NamedTensor> named_tensors(AwareModel& model) {
  std::vector<NamedTensor> out;
  if (model.kind == AwareKind::Global) {
    auto& p = model.global;
    for (std::size_t g = 0; g < p.global_proj.size(); ++g) {
      add(out, "global_proj." + std::to_string(g) + ".weight", p.global_proj[g].weight);
      add(out, "global_proj." + std::to_string(g) + ".bias", p.global_proj[g].bias);
    }
    for (int i = 0; i < p.num_parts(); ++i) {
      const std::string part = "part" + std::to_string(i + 1);
      add(out, part + ".proj.weight", p.part_proj[i].weight);
      add(out, part + ".proj.bias", p.part_proj[i].bias);
      add(out, part + ".fuse.weight", p.fuse[i].weight);
      add(out, part + ".fuse.bias", p.fuse[i].bias);
      add(out, part + ".norm.gamma", p.norm[i].gamma);
      add(out, part + ".norm.beta", p.norm[i].beta);
      add(out, part + ".norm.running_mean", p.norm[i].running_mean);
      add(out, part + ".norm.running_var", p.norm[i].running_var);
    }
  } else if (model.adapter) {
    for (std::size_t i = 0; i < model.adapter->parts.size(); ++i) {
      const std::string part = "part" + std::to_string(i + 1);
      add(out, part + ".adapter.weight", model.adapter->parts[i].weight);
      add(out, part + ".adapter.bias", model.adapter->parts[i].bias);
    }
  }
  return out;
}

}  // namespace upmnet

#include "upmnet/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "upmnet/error.hpp"

namespace upmnet {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "upmnet-checkpoint";

Float64Tensor to_tensor(const double* data, Eigen::Index rows, Eigen::Index cols) {
  Float64Tensor t{Dims{static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols), 1}, {}};
  t.data.assign(data, data + rows * cols);
  return t;
}

void fill(const std::filesystem::path& path, double* data, Eigen::Index rows, Eigen::Index cols) {
  const Float64Tensor t = read_float64_tensor(path);
  if (t.dims.h != rows || t.dims.w != cols || t.dims.c != 1)
    throw Error(ErrorCode::ShapeMismatch, path.string() + ": tensor shape does not match checkpoint header");
  std::copy(t.data.begin(), t.data.end(), data);
}

std::string file_for(const std::string& name) { return name + ".upmf"; }

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, TrainState& state) {
  std::filesystem::create_directories(dir);
  json header;
  header["format"] = kFormat;
  header["version"] = 1;
  header["iteration"] = state.iteration;
  header["config"] = json::parse(to_json(state.config));
  header["model"] = {{"kind", std::string(to_string(state.model.kind))},
                     {"k", state.model.k},
                     {"in_dim", state.model.in_dim},
                     {"feature_dim", state.model.feature_dim()}};
  std::ostringstream rng;
  rng << state.rng;
  header["rng_state"] = rng.str();

  json tensors = json::array();
  auto write = [&](const std::string& name, const double* data, Eigen::Index rows, Eigen::Index cols) {
    write_float64_tensor(dir / file_for(name), to_tensor(data, rows, cols));
    tensors.push_back({{"name", name}, {"file", file_for(name)}, {"rows", rows}, {"cols", cols}});
  };

  for (const auto& t : named_tensors(state.model)) write("model." + t.name, t.data, t.rows, t.cols);

  AnchorBank& bank = state.bank;
  json slots = json::array();
  for (const auto& s : bank.slots()) slots.push_back({s.camera.value, s.value});
  header["anchors"] = {{"eta", bank.eta},
                       {"iteration", bank.iteration},
                       {"renormalize", bank.renormalize},
                       {"num_parts", bank.num_parts()},
                       {"dim", bank.dim()},
                       {"slots", slots}};
  for (int i = 0; i < bank.num_parts(); ++i) {
    const std::string part = "part" + std::to_string(i + 1);
    write("anchors.intra." + part, bank.intra[i].data(), bank.intra[i].rows(), bank.intra[i].cols());
    write("anchors.cross." + part, bank.cross[i].data(), bank.cross[i].rows(), bank.cross[i].cols());
  }

  const auto views = trainable_views(state.model);
  json buffers = json::array();
  for (std::size_t t = 0; t < state.optimizer.buffers.size(); ++t) {
    const std::string name = "optimizer." + views[t].name;
    write(name, state.optimizer.buffers[t].data(), static_cast<Eigen::Index>(state.optimizer.buffers[t].size()), 1);
    buffers.push_back(name);
  }
  header["optimizer"] = {{"buffers", buffers}};
  header["tensors"] = tensors;

  std::ofstream out(dir / "header.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "header.json").string());
  out << header.dump(2) << '\n';
}

TrainState load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "header.json");
  if (!in) throw Error(ErrorCode::MissingFile, (dir / "header.json").string());
  json header;
  try {
    header = json::parse(in);
    if (header.at("format").get<std::string>() != kFormat || header.at("version").get<int>() != 1)
      throw Error(ErrorCode::ParseError, "not a version-1 checkpoint: " + dir.string());

    TrainState state;
    state.config = train_config_from_json(header.at("config").dump());
    state.iteration = header.at("iteration").get<std::uint64_t>();
    std::istringstream rng(header.at("rng_state").get<std::string>());
    rng >> state.rng;
    if (!rng) throw Error(ErrorCode::ParseError, "bad rng_state");

    const json& m = header.at("model");
    const ModelShape shape{parse_aware_kind(m.at("kind").get<std::string>()),
                           m.at("k").get<int>(),
                           m.at("in_dim").get<int>(),
                           state.config.reduced_dim,
                           state.config.local_adapter,
                           state.config.independent_global_proj};
    state.model = make_model(shape, 0);
    for (const auto& t : named_tensors(state.model)) fill(dir / file_for("model." + t.name), t.data, t.rows, t.cols);

    const json& a = header.at("anchors");
    std::vector<TrackletId> slots;
    for (const auto& s : a.at("slots")) slots.push_back(TrackletId{s.at(1).get<std::uint32_t>(), CameraId{s.at(0).get<std::uint32_t>()}});
    state.bank = AnchorBank(std::move(slots), a.at("num_parts").get<int>(), a.at("dim").get<int>(), a.at("eta").get<double>());
    state.bank.iteration = a.at("iteration").get<std::uint64_t>();
    state.bank.renormalize = a.at("renormalize").get<bool>();
    for (int i = 0; i < state.bank.num_parts(); ++i) {
      const std::string part = "part" + std::to_string(i + 1);
      fill(dir / file_for("anchors.intra." + part), state.bank.intra[i].data(), state.bank.intra[i].rows(), state.bank.intra[i].cols());
      fill(dir / file_for("anchors.cross." + part), state.bank.cross[i].data(), state.bank.cross[i].rows(), state.bank.cross[i].cols());
    }

    const auto views = trainable_views(state.model);
    const auto& buffers = header.at("optimizer").at("buffers");
    if (!buffers.empty()) {
      if (buffers.size() != views.size()) throw Error(ErrorCode::ShapeMismatch, "optimizer buffer count");
      for (std::size_t t = 0; t < views.size(); ++t) {
        std::vector<double> buf(views[t].size);
        fill(dir / file_for("optimizer." + views[t].name), buf.data(), static_cast<Eigen::Index>(buf.size()), 1);
        state.optimizer.buffers.push_back(std::move(buf));
      }
    }
    return state;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, dir.string() + ": " + e.what());
  }
}

}  // namespace upmnet

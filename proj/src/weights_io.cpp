#include <bit>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "statefuse/error.hpp"
#include "statefuse/pipeline.hpp"

namespace statefuse {

using nlohmann::json;

namespace {

struct Tensor {
  std::string name;
  Eigen::MatrixXd value;
};

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

// Fixed tensor order shared by the writer and the reader.
std::vector<Tensor> flatten(const PipelineWeights& w) {
  std::vector<Tensor> t;
  for (std::size_t l = 0; l < w.stack.layers.size(); ++l) {
    const auto& p = w.stack.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    const Eigen::Index e = p.width();
    const Eigen::Index m = p.gs4.bank.empty() ? 0 : p.gs4.bank[0].state_dim();
    Eigen::MatrixXd a(e, m), b(e, m), c(e, m), d(e, 1);
    for (Eigen::Index ch = 0; ch < e; ++ch) {
      const auto& s = p.gs4.bank[static_cast<std::size_t>(ch)];
      a.row(ch) = s.a_bar.transpose();
      b.row(ch) = s.b_bar.transpose();
      c.row(ch) = s.c_bar.transpose();
      d(ch, 0) = s.d_bar;
    }
    t.push_back({pre + "ln1.scale", p.ln1.scale});
    t.push_back({pre + "ln1.shift", p.ln1.shift});
    t.push_back({pre + "ln1.epsilon", scalar(p.ln1.epsilon)});
    t.push_back({pre + "ln2.scale", p.ln2.scale});
    t.push_back({pre + "ln2.shift", p.ln2.shift});
    t.push_back({pre + "ln2.epsilon", scalar(p.ln2.epsilon)});
    t.push_back({pre + "dw_kernel", p.dw_kernel});
    t.push_back({pre + "gs4.a_bar", a});
    t.push_back({pre + "gs4.b_bar", b});
    t.push_back({pre + "gs4.c_bar", c});
    t.push_back({pre + "gs4.d_bar", d});
    t.push_back({pre + "gs4.w_u", p.gs4.w_u});
    t.push_back({pre + "gs4.w_v", p.gs4.w_v});
    t.push_back({pre + "gs4.w_o", p.gs4.w_o});
    t.push_back({pre + "out.weight", p.out_weight});
    t.push_back({pre + "out.bias", p.out_bias});
  }
  for (int h = 0; h < w.attn.n_heads; ++h) {
    const std::string pre = "attn.head" + std::to_string(h) + ".";
    Eigen::MatrixXd offs(w.attn.n_keys, 2);
    for (int n = 0; n < w.attn.n_keys; ++n) offs.row(n) = w.attn.offsets[h][n].transpose();
    t.push_back({pre + "value_proj", w.attn.value_proj[h]});
    t.push_back({pre + "out_proj", w.attn.out_proj[h]});
    t.push_back({pre + "offsets", offs});
  }
  t.push_back({"attn.weights", w.attn.weights});
  t.push_back({"pos.temperature", scalar(w.pos.temperature)});
  t.push_back({"pos.w1", w.pos.w1});
  t.push_back({"pos.b1", w.pos.b1});
  t.push_back({"pos.w2", w.pos.w2});
  t.push_back({"pos.b2", w.pos.b2});
  t.push_back({"sem_proj", w.sem_proj});
  t.push_back({"decoder.w_q", w.decoder.w_q});
  t.push_back({"decoder.w_k", w.decoder.w_k});
  t.push_back({"decoder.w_v", w.decoder.w_v});
  t.push_back({"decoder.w_o", w.decoder.w_o});
  t.push_back({"box.weight", w.box.weight});
  t.push_back({"box.bias", w.box.bias});
  return t;
}

void unflatten(PipelineWeights& w, const std::vector<Tensor>& t) {
  std::size_t i = 0;
  auto next = [&]() -> const Eigen::MatrixXd& { return t.at(i++).value; };
  for (auto& p : w.stack.layers) {
    p.ln1.scale = next();
    p.ln1.shift = next();
    p.ln1.epsilon = next()(0, 0);
    p.ln2.scale = next();
    p.ln2.shift = next();
    p.ln2.epsilon = next()(0, 0);
    p.dw_kernel = next();
    const Eigen::MatrixXd a = next(), b = next(), c = next(), d = next();
    for (std::size_t ch = 0; ch < p.gs4.bank.size(); ++ch) {
      auto& s = p.gs4.bank[ch];
      const auto r = static_cast<Eigen::Index>(ch);
      s.a_bar = a.row(r).transpose();
      s.b_bar = b.row(r).transpose();
      s.c_bar = c.row(r).transpose();
      s.d_bar = d(r, 0);
    }
    p.gs4.w_u = next();
    p.gs4.w_v = next();
    p.gs4.w_o = next();
    p.out_weight = next();
    p.out_bias = next();
  }
  for (int h = 0; h < w.attn.n_heads; ++h) {
    w.attn.value_proj[h] = next();
    w.attn.out_proj[h] = next();
    const Eigen::MatrixXd offs = next();
    for (int n = 0; n < w.attn.n_keys; ++n) w.attn.offsets[h][n] = offs.row(n).transpose();
  }
  w.attn.weights = next();
  w.pos.temperature = next()(0, 0);
  w.pos.w1 = next();
  w.pos.b1 = next();
  w.pos.w2 = next();
  w.pos.b2 = next();
  w.sem_proj = next();
  w.decoder.w_q = next();
  w.decoder.w_k = next();
  w.decoder.w_v = next();
  w.decoder.w_o = next();
  w.box.weight = next();
  w.box.bias = next();
}

json dims_to_json(const PipelineDims& d) {
  return {{"k_queries", d.k_queries},       {"embed_dim", d.embed_dim},
          {"feature_channels", d.feature_channels}, {"state_dim", d.state_dim},
          {"n_layers", d.n_layers},         {"dw_ksize", d.dw_ksize},
          {"n_heads", d.n_heads},           {"n_keys", d.n_keys},
          {"head_dim", d.head_dim},         {"decoder_keys_per_camera", d.decoder_keys_per_camera}};
}

PipelineDims dims_from_json(const json& j) {
  PipelineDims d;
  d.k_queries = j.at("k_queries").get<int>();
  d.embed_dim = j.at("embed_dim").get<int>();
  d.feature_channels = j.at("feature_channels").get<int>();
  d.state_dim = j.at("state_dim").get<int>();
  d.n_layers = j.at("n_layers").get<int>();
  d.dw_ksize = j.at("dw_ksize").get<int>();
  d.n_heads = j.at("n_heads").get<int>();
  d.n_keys = j.at("n_keys").get<int>();
  d.head_dim = j.at("head_dim").get<int>();
  d.decoder_keys_per_camera = j.at("decoder_keys_per_camera").get<int>();
  d.validate();
  return d;
}

}  // namespace

std::string serialize_weights(const PipelineWeights& w) {
  static_assert(std::endian::native == std::endian::little, "weights blob assumes little-endian");
  w.validate();
  const auto tensors = flatten(w);
  json header;
  header["format"] = "statefuse-weights";
  header["version"] = 1;
  header["seed"] = w.seed;
  header["decoder_sample_seed"] = w.decoder.sample_seed;
  header["box_mode"] = to_string(w.box_mode);
  header["dims"] = dims_to_json(w.dims);
  header["dtype"] = "float64";
  header["endianness"] = "little";
  json list = json::array();
  std::size_t count = 0;
  for (const auto& t : tensors) {
    list.push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}});
    count += static_cast<std::size_t>(t.value.size());
  }
  header["tensors"] = std::move(list);
  header["param_count"] = count;

  const std::string h = header.dump();
  const std::uint64_t hlen = h.size();
  std::string out;
  out.reserve(8 + h.size() + count * 8);
  out.append(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out += h;
  for (const auto& t : tensors)
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
        const double v = t.value(r, c);
        out.append(reinterpret_cast<const char*>(&v), sizeof v);
      }
  return out;
}

PipelineWeights parse_weights(const std::string& bytes) {
  require(bytes.size() >= 8, ErrorKind::kInvalidInput, "weights file too short");
  std::uint64_t hlen = 0;
  std::memcpy(&hlen, bytes.data(), sizeof hlen);
  require(hlen <= bytes.size() - 8, ErrorKind::kInvalidInput, "weights header truncated");
  json header;
  try {
    header = json::parse(bytes.substr(8, hlen));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kInvalidInput, std::string("malformed weights header: ") + e.what());
  }

  try {
    require(header.at("format") == "statefuse-weights", ErrorKind::kInvalidInput,
            "not a statefuse weights file");
    const PipelineDims dims = dims_from_json(header.at("dims"));
    // Shapes come from a seeded instance; every value is then overwritten.
    PipelineWeights w = PipelineWeights::seeded(dims, header.at("seed").get<std::uint64_t>(),
                                                box_mode_from_string(header.at("box_mode")));
    w.decoder.sample_seed = header.at("decoder_sample_seed").get<std::uint64_t>();
    std::vector<Tensor> expected = flatten(w);
    const json& list = header.at("tensors");
    require(list.size() == expected.size(), ErrorKind::kInvalidInput, "tensor count mismatch");

    std::size_t offset = 8 + hlen;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      auto& t = expected[i];
      const auto& entry = list[i];
      require(entry.at("name") == t.name && entry.at("shape")[0] == t.value.rows() &&
                  entry.at("shape")[1] == t.value.cols(),
              ErrorKind::kInvalidInput, "unexpected tensor " + entry.at("name").get<std::string>());
      const std::size_t n = static_cast<std::size_t>(t.value.size());
      require(offset + n * 8 <= bytes.size(), ErrorKind::kInvalidInput, "weights blob truncated");
      for (Eigen::Index r = 0; r < t.value.rows(); ++r)
        for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
          double v = 0.0;
          std::memcpy(&v, bytes.data() + offset, sizeof v);
          offset += sizeof v;
          t.value(r, c) = v;
        }
    }
    require(offset == bytes.size(), ErrorKind::kInvalidInput, "trailing bytes in weights file");
    unflatten(w, expected);
    w.validate();
    return w;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidInput, std::string("bad weights header: ") + e.what());
  }
}

}  // namespace statefuse

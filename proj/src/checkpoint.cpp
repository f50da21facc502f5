#include <fstream>

#include <json.hpp>

#include "plmkit/encoder.hpp"

namespace plmkit {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'M', 'C'};
constexpr std::uint16_t kVersion = 1;

using nlohmann::json;

json config_to_json(const EncoderConfig& c) {
  return json{{"layers", c.layers},
              {"d_model", c.d_model},
              {"ff_width", c.ff_width},
              {"heads", c.heads},
              {"positional", positional_name(c.positional)},
              {"max_positions", c.max_positions},
              {"rel_buckets", c.rel_buckets},
              {"rel_max_distance", c.rel_max_distance},
              {"share_layers", c.share_layers},
              {"dropout", c.dropout},
              {"vocab_size", c.vocab_size}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.layers = j.at("layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.ff_width = j.at("ff_width").get<int>();
  c.heads = j.at("heads").get<int>();
  c.positional = positional_from_name(j.at("positional").get<std::string>());
  c.max_positions = j.at("max_positions").get<int>();
  c.rel_buckets = j.at("rel_buckets").get<int>();
  c.rel_max_distance = j.at("rel_max_distance").get<int>();
  c.share_layers = j.at("share_layers").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  c.vocab_size = j.at("vocab_size").get<int>();
  return c;
}

json meta_to_json(const TrainingMeta& m) {
  json phases = json::array();
  for (const auto& p : m.phases)
    phases.push_back(json{{"max_len", p.max_len},
                          {"steps", p.steps},
                          {"batch_size", p.batch_size}});
  return json{{"steps", m.steps},
              {"global_batch_size", m.global_batch_size},
              {"samples_seen", m.samples_seen},
              {"corpus_id", m.corpus_id},
              {"seed", m.seed},
              {"optimizer", m.optimizer},
              {"schedule", m.schedule},
              {"phases", phases}};
}

TrainingMeta meta_from_json(const json& j) {
  TrainingMeta m;
  m.steps = j.at("steps").get<long>();
  m.global_batch_size = j.at("global_batch_size").get<long>();
  m.samples_seen = j.at("samples_seen").get<long>();
  m.corpus_id = j.at("corpus_id").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.optimizer = j.at("optimizer").get<std::string>();
  m.schedule = j.at("schedule").get<std::string>();
  for (const auto& p : j.at("phases")) {
    m.phases.push_back({p.at("max_len").get<int>(), p.at("steps").get<long>(),
                        p.at("batch_size").get<long>()});
  }
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.config.validate();
  ckpt.meta.validate();
  const ParamMap<float> expected = detail::empty_params<float>(ckpt.config);
  if (expected.size() != ckpt.params.size())
    throw ContractError("checkpoint: parameter set does not match the config");
  for (const auto& [name, mat] : expected) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end())
      throw ContractError("checkpoint: missing parameter " + name);
    if (it->second.rows() != mat.rows() || it->second.cols() != mat.cols())
      throw ContractError("checkpoint: shape mismatch for " + name);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  io::write_pod<std::uint16_t>(out, kVersion);
  const std::string header =
      nlohmann::json{{"config", config_to_json(ckpt.config)},
                     {"meta", meta_to_json(ckpt.meta)}}
          .dump();
  io::write_pod<std::uint32_t>(out, std::uint32_t(header.size()));
  io::write_bytes(out, header);

  for (const auto& [name, mat] : ckpt.params) {  // map order: sorted by name
    io::write_pod<std::uint16_t>(out, std::uint16_t(name.size()));
    io::write_bytes(out, name);
    const std::uint8_t rank = mat.rows() == 1 ? 1 : 2;
    io::write_pod<std::uint8_t>(out, rank);
    if (rank == 2) io::write_pod<std::uint32_t>(out, std::uint32_t(mat.rows()));
    io::write_pod<std::uint32_t>(out, std::uint32_t(mat.cols()));
    out.write(reinterpret_cast<const char*>(mat.data()),
              std::streamsize(sizeof(float)) * mat.size());
  }
  if (!out) throw UserError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4))
    throw FormatError("bad magic in checkpoint: " + path);
  const auto version = io::read_pod<std::uint16_t>(in, path);
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version in " + path);

  const auto header_len = io::read_pod<std::uint32_t>(in, path);
  const std::string header = io::read_bytes(in, header_len, path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint header in " + path + ": " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(j.at("config"));
    ckpt.meta = meta_from_json(j.at("meta"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint header in " + path + ": " + e.what());
  }
  ckpt.config.validate();
  ckpt.meta.validate();

  const ParamMap<float> expected = detail::empty_params<float>(ckpt.config);
  while (true) {
    std::uint16_t name_len;
    in.read(reinterpret_cast<char*>(&name_len), sizeof name_len);
    if (in.eof()) break;
    if (!in) throw FormatError("truncated file: " + path);
    const std::string name = io::read_bytes(in, name_len, path);
    const auto rank = io::read_pod<std::uint8_t>(in, path);
    if (rank != 1 && rank != 2)
      throw FormatError("bad parameter rank in " + path);
    std::uint32_t rows = 1, cols;
    if (rank == 2) rows = io::read_pod<std::uint32_t>(in, path);
    cols = io::read_pod<std::uint32_t>(in, path);
    nn::Mat<float> mat(rows, cols);
    in.read(reinterpret_cast<char*>(mat.data()),
            std::streamsize(sizeof(float)) * mat.size());
    if (!in) throw FormatError("truncated file: " + path);
    ckpt.params.emplace(name, std::move(mat));
  }

  if (ckpt.params.size() != expected.size())
    throw FormatError("checkpoint parameter set does not match config: " + path);
  for (const auto& [name, mat] : expected) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end() || it->second.rows() != mat.rows() ||
        it->second.cols() != mat.cols())
      throw FormatError("checkpoint parameter " + name + " missing or misshapen: " + path);
  }
  return ckpt;
}

}  // namespace plmkit

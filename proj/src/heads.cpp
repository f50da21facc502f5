#include "plmkit/heads.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "plmkit/optim.hpp"

namespace plmkit {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'M', 'H'};
constexpr std::uint16_t kVersion = 1;

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

constexpr const char* kMembraneBound = "membrane-bound";
constexpr const char* kWaterSoluble = "water-soluble";

}  // namespace

int ss8_index(char c) {
  for (int i = 0; i < 8; ++i)
    if (kSs8Alphabet[i] == c) return i;
  throw UserError(std::string("unknown 8-state symbol '") + c + "'");
}

int ss3_index(char c) {
  for (int i = 0; i < 3; ++i)
    if (kSs3Alphabet[i] == c) return i;
  throw UserError(std::string("unknown 3-state symbol '") + c + "'");
}

char map_ss8_to_ss3(char ss8) {
  switch (ss8) {
    case 'H': case 'G': case 'I': return 'H';
    case 'E': case 'B': return 'E';
    case '-': case 'S': case 'T': return '-';
    default:
      throw UserError(std::string("unknown 8-state symbol '") + ss8 + "'");
  }
}

std::vector<ResidueLabelSet> parse_residue_labels(std::istream& in) {
  std::vector<ResidueLabelSet> out;
  std::set<std::string> seen;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw ParseError("residue labels line " + std::to_string(line_no) +
                       ": expected id<TAB>sequence<TAB>ss8");
    ResidueLabelSet rec;
    rec.id = fields[0];
    rec.sequence = fields[1];
    rec.ss8 = fields[2];
    if (rec.id.empty() || !seen.insert(rec.id).second)
      throw ParseError("residue labels line " + std::to_string(line_no) +
                       ": missing or duplicate id");
    if (rec.sequence.size() != rec.ss8.size())
      throw ParseError("residue labels for '" + rec.id +
                       "': sequence and label lengths differ");
    rec.ss3.reserve(rec.ss8.size());
    for (char c : rec.ss8) rec.ss3.push_back(map_ss8_to_ss3(c));
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ProteinLabel> parse_protein_labels(std::istream& in) {
  std::vector<ProteinLabel> out;
  std::set<std::string> seen;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw ParseError("protein labels line " + std::to_string(line_no) +
                       ": expected id<TAB>localization<TAB>membrane");
    ProteinLabel rec;
    rec.id = fields[0];
    if (fields[1] != "-") rec.localization = fields[1];
    if (fields[2] != "-") rec.membrane = fields[2];
    if (rec.id.empty() || !seen.insert(rec.id).second)
      throw ParseError("protein labels line " + std::to_string(line_no) +
                       ": missing or duplicate id");
    if (rec.localization.empty() && rec.membrane.empty())
      throw ParseError("protein labels line " + std::to_string(line_no) +
                       ": at least one label required");
    if (!rec.membrane.empty() && rec.membrane != kMembraneBound &&
        rec.membrane != kWaterSoluble)
      throw ParseError("protein labels line " + std::to_string(line_no) +
                       ": membrane flag must be membrane-bound or water-soluble");
    out.push_back(std::move(rec));
  }
  return out;
}

const char* head_kind_name(HeadKind k) {
  switch (k) {
    case HeadKind::LogReg: return "logreg";
    case HeadKind::Fnn: return "fnn";
    case HeadKind::Cnn: return "cnn";
    case HeadKind::Lstm: return "lstm";
    case HeadKind::ProteinFnn: return "protein-fnn";
  }
  return "?";
}

HeadKind head_kind_from_name(const std::string& s) {
  if (s == "logreg") return HeadKind::LogReg;
  if (s == "fnn") return HeadKind::Fnn;
  if (s == "cnn") return HeadKind::Cnn;
  if (s == "lstm") return HeadKind::Lstm;
  if (s == "protein-fnn") return HeadKind::ProteinFnn;
  throw ContractError("unknown head kind: " + s);
}

namespace {

// residue batch loss: residue-weighted mean of per-protein (CE3 + CE8)
nn::NodeRef<float> residue_batch_loss(
    nn::Graph<float>& g, HeadKind kind, const HeadHyper& hyper,
    const std::map<std::string, nn::NodeRef<float>>& param_nodes,
    const std::vector<const ResidueExample*>& batch) {
  using namespace nn;
  std::size_t total_residues = 0;
  for (const auto* ex : batch) total_residues += ex->ss8.size();

  NodeRef<float> loss;
  for (const auto* ex : batch) {
    auto features = constant(g, ex->features);
    auto out = residue_head_forward(g, kind, hyper, param_nodes, features);
    std::vector<int> t3, t8;
    t3.reserve(ex->ss8.size());
    t8.reserve(ex->ss8.size());
    for (char c : ex->ss8) {
      t8.push_back(ss8_index(c));
      t3.push_back(ss3_index(map_ss8_to_ss3(c)));
    }
    auto protein_loss = add(cross_entropy(out.logits3, t3),
                            cross_entropy(out.logits8, t8));
    auto weighted = scale(protein_loss,
                          float(double(ex->ss8.size()) / double(total_residues)));
    loss = loss ? add(loss, weighted) : weighted;
  }
  return loss;
}

double residue_q3_percent(const HeadModel& model,
                          const std::vector<const ResidueExample*>& subset) {
  if (subset.empty()) return 0.0;
  double sum = 0.0;
  for (const auto* ex : subset) {
    auto pred = predict_residue(model, ex->features);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ex->ss8.size(); ++i)
      if (pred.ss3[i] == map_ss8_to_ss3(ex->ss8[i])) correct++;
    sum += 100.0 * double(correct) / double(ex->ss8.size());
  }
  return sum / double(subset.size());
}

}  // namespace

HeadModel train_residue_head(HeadKind kind, const std::vector<ResidueExample>& data,
                             const HeadHyper& hyper, std::uint64_t seed) {
  if (kind == HeadKind::ProteinFnn)
    throw ContractError("train_residue_head: protein-fnn is a protein head");
  if (data.empty()) throw UserError("train_residue_head: no training examples");
  const int width = int(data.front().features.cols());
  for (const auto& ex : data) {
    if (int(ex.features.cols()) != width)
      throw UserError("train_residue_head: feature width differs for '" + ex.id + "'");
    if (ex.features.rows() != Eigen::Index(ex.ss8.size()))
      throw UserError("train_residue_head: features and labels misaligned for '" +
                      ex.id + "'");
    for (char c : ex.ss8) ss8_index(c);
  }

  HeadModel model;
  model.kind = kind;
  model.input_width = width;
  model.hyper = hyper;
  model.seed = seed;
  model.params = init_head_params<float>(kind, width, hyper, seed);

  // deterministic validation split by protein
  Rng split_rng(seed * 0x9E3779B9ull + 17);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t j = order.size(); j > 1; --j)
    std::swap(order[j - 1], order[split_rng.uniform_int(std::uint32_t(j))]);
  const std::size_t n_val =
      hyper.validation_split > 0
          ? std::min(data.size() - 1,
                     std::size_t(hyper.validation_split * double(data.size())))
          : 0;
  std::vector<const ResidueExample*> val, train;
  for (std::size_t i = 0; i < n_val; ++i) val.push_back(&data[order[i]]);
  for (std::size_t i = n_val; i < data.size(); ++i) train.push_back(&data[order[i]]);

  nn::OptimizerState<float> opt;
  opt.kind = nn::OptimizerKind::Adam;

  ParamMap<float> best_params = model.params;
  double best_score = -1.0;
  int since_best = 0;

  Rng epoch_rng(seed * 0x51ED2701ull + 3);
  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t j = idx.size(); j > 1; --j)
      std::swap(idx[j - 1], idx[epoch_rng.uniform_int(std::uint32_t(j))]);

    for (std::size_t start = 0; start < idx.size();
         start += std::size_t(hyper.batch_proteins)) {
      std::vector<const ResidueExample*> batch;
      for (std::size_t i = start;
           i < std::min(idx.size(), start + std::size_t(hyper.batch_proteins)); ++i)
        batch.push_back(train[idx[i]]);

      nn::Graph<float> g;
      std::map<std::string, nn::NodeRef<float>> param_nodes;
      for (const auto& [name, mat] : model.params)
        param_nodes.emplace(name, nn::leaf(g, mat, true));
      auto loss = residue_batch_loss(g, kind, hyper, param_nodes, batch);
      g.backward(loss.node);
      ParamMap<float> grads;
      for (const auto& [name, node] : param_nodes) grads.emplace(name, node.grad());
      nn::optimizer_step(opt, model.params, grads, hyper.learning_rate);
    }
    model.epochs_trained = epoch + 1;

    if (!val.empty()) {
      const double score = residue_q3_percent(model, val);
      if (score > best_score) {
        best_score = score;
        best_params = model.params;
        since_best = 0;
      } else if (++since_best >= hyper.patience) {
        break;
      }
    }
  }

  if (!val.empty()) {
    model.params = best_params;
    model.validation_score = best_score;
  } else {
    model.validation_score = residue_q3_percent(model, train);
  }
  return model;
}

ResiduePrediction predict_residue(const HeadModel& model, const nn::Mat<float>& features) {
  if (int(features.cols()) != model.input_width)
    throw UserError("predict_residue: feature width " + std::to_string(features.cols()) +
                    " does not match model width " + std::to_string(model.input_width));
  nn::Graph<float> g;
  std::map<std::string, nn::NodeRef<float>> param_nodes;
  for (const auto& [name, mat] : model.params)
    param_nodes.emplace(name, nn::leaf(g, mat, false));
  auto out = residue_head_forward(g, model.kind, model.hyper, param_nodes,
                                  nn::constant(g, features));
  ResiduePrediction pred;
  pred.dist3 = nn::softmax_rows(out.logits3).value();
  pred.dist8 = nn::softmax_rows(out.logits8).value();
  auto argmax_row = [](const auto& row) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < row.cols(); ++c)
      if (row(0, c) > row(0, best)) best = c;  // ties keep the lowest index
    return best;
  };
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    pred.ss3.push_back(kSs3Alphabet[argmax_row(pred.dist3.row(r))]);
    pred.ss8.push_back(kSs8Alphabet[argmax_row(pred.dist8.row(r))]);
  }
  return pred;
}

HeadModel train_protein_head(const std::vector<ProteinExample>& data,
                             const HeadHyper& hyper, std::uint64_t seed) {
  if (data.empty()) throw UserError("train_protein_head: no training examples");
  const int width = int(data.front().pooled.cols());
  std::set<std::string> categories;
  for (const auto& ex : data) {
    if (int(ex.pooled.cols()) != width)
      throw UserError("train_protein_head: pooled width differs for '" + ex.id + "'");
    if (ex.localization.empty() && ex.membrane.empty())
      throw UserError("train_protein_head: '" + ex.id + "' has no labels");
    if (!ex.membrane.empty() && ex.membrane != kMembraneBound &&
        ex.membrane != kWaterSoluble)
      throw UserError("train_protein_head: bad membrane flag for '" + ex.id + "'");
    if (!ex.localization.empty()) categories.insert(ex.localization);
  }
  if (categories.size() > std::size_t(kLocalizationClasses))
    throw UserError("train_protein_head: more than " +
                    std::to_string(kLocalizationClasses) + " localization categories");

  HeadModel model;
  model.kind = HeadKind::ProteinFnn;
  model.input_width = width;
  model.hyper = hyper;
  model.seed = seed;
  model.localization_categories.assign(categories.begin(), categories.end());
  model.params = init_head_params<float>(HeadKind::ProteinFnn, width, hyper, seed);

  auto loc_index = [&](const std::string& name) {
    const auto it = std::find(model.localization_categories.begin(),
                              model.localization_categories.end(), name);
    return int(it - model.localization_categories.begin());
  };

  Rng split_rng(seed * 0x9E3779B9ull + 17);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t j = order.size(); j > 1; --j)
    std::swap(order[j - 1], order[split_rng.uniform_int(std::uint32_t(j))]);
  const std::size_t n_val =
      hyper.validation_split > 0
          ? std::min(data.size() - 1,
                     std::size_t(hyper.validation_split * double(data.size())))
          : 0;
  std::vector<const ProteinExample*> val, train;
  for (std::size_t i = 0; i < n_val; ++i) val.push_back(&data[order[i]]);
  for (std::size_t i = n_val; i < data.size(); ++i) train.push_back(&data[order[i]]);

  nn::OptimizerState<float> opt;
  opt.kind = nn::OptimizerKind::Adam;

  auto q10_percent = [&](const std::vector<const ProteinExample*>& subset) {
    std::size_t labeled = 0, correct = 0;
    for (const auto* ex : subset) {
      if (ex->localization.empty()) continue;
      labeled++;
      auto pred = predict_protein(model, ex->pooled);
      if (pred.localization == ex->localization) correct++;
    }
    return labeled == 0 ? 0.0 : 100.0 * double(correct) / double(labeled);
  };

  ParamMap<float> best_params = model.params;
  double best_score = -1.0;
  int since_best = 0;

  Rng epoch_rng(seed * 0x51ED2701ull + 3);
  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t j = idx.size(); j > 1; --j)
      std::swap(idx[j - 1], idx[epoch_rng.uniform_int(std::uint32_t(j))]);

    for (std::size_t start = 0; start < idx.size();
         start += std::size_t(hyper.batch_proteins)) {
      std::vector<const ProteinExample*> batch;
      for (std::size_t i = start;
           i < std::min(idx.size(), start + std::size_t(hyper.batch_proteins)); ++i)
        batch.push_back(train[idx[i]]);

      nn::Mat<float> pooled(Eigen::Index(batch.size()), width);
      nn::IndexVec loc_rows, mem_rows;
      std::vector<int> loc_targets, mem_targets;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        pooled.row(Eigen::Index(b)) = batch[b]->pooled;
        if (!batch[b]->localization.empty()) {
          loc_rows.push_back(Eigen::Index(b));
          loc_targets.push_back(loc_index(batch[b]->localization));
        }
        if (!batch[b]->membrane.empty()) {
          mem_rows.push_back(Eigen::Index(b));
          mem_targets.push_back(batch[b]->membrane == kMembraneBound ? 0 : 1);
        }
      }

      nn::Graph<float> g;
      std::map<std::string, nn::NodeRef<float>> param_nodes;
      for (const auto& [name, mat] : model.params)
        param_nodes.emplace(name, nn::leaf(g, mat, true));
      auto out = protein_head_forward(g, hyper, param_nodes, nn::constant(g, pooled));

      // a task contributes only when the batch has labels for it
      nn::NodeRef<float> loss;
      if (!loc_rows.empty()) {
        auto ce = nn::cross_entropy(nn::gather_rows(out.logits_loc, loc_rows), loc_targets);
        loss = ce;
      }
      if (!mem_rows.empty()) {
        auto ce = nn::cross_entropy(nn::gather_rows(out.logits_mem, mem_rows), mem_targets);
        loss = loss ? nn::add(loss, ce) : ce;
      }
      if (!loss) continue;
      g.backward(loss.node);
      ParamMap<float> grads;
      for (const auto& [name, node] : param_nodes) grads.emplace(name, node.grad());
      nn::optimizer_step(opt, model.params, grads, hyper.learning_rate);
    }
    model.epochs_trained = epoch + 1;

    if (!val.empty()) {
      const double score = q10_percent(val);
      if (score > best_score) {
        best_score = score;
        best_params = model.params;
        since_best = 0;
      } else if (++since_best >= hyper.patience) {
        break;
      }
    }
  }

  if (!val.empty()) {
    model.params = best_params;
    model.validation_score = best_score;
  } else {
    model.validation_score = q10_percent(train);
  }
  return model;
}

ProteinPrediction predict_protein(const HeadModel& model,
                                  const Eigen::RowVectorXf& pooled) {
  if (model.kind != HeadKind::ProteinFnn)
    throw ContractError("predict_protein: not a protein head");
  if (int(pooled.cols()) != model.input_width)
    throw UserError("predict_protein: pooled width does not match model");
  nn::Graph<float> g;
  std::map<std::string, nn::NodeRef<float>> param_nodes;
  for (const auto& [name, mat] : model.params)
    param_nodes.emplace(name, nn::leaf(g, mat, false));
  nn::Mat<float> row(1, pooled.cols());
  row.row(0) = pooled;
  auto out = protein_head_forward(g, model.hyper, param_nodes, nn::constant(g, row));

  ProteinPrediction pred;
  pred.dist_loc = nn::softmax_rows(out.logits_loc).value().row(0);
  pred.dist_mem = nn::softmax_rows(out.logits_mem).value().row(0);
  Eigen::Index best_loc = 0, best_mem = 0;
  for (Eigen::Index c = 1; c < pred.dist_loc.cols(); ++c)
    if (pred.dist_loc(c) > pred.dist_loc(best_loc)) best_loc = c;
  for (Eigen::Index c = 1; c < pred.dist_mem.cols(); ++c)
    if (pred.dist_mem(c) > pred.dist_mem(best_mem)) best_mem = c;
  pred.localization = std::size_t(best_loc) < model.localization_categories.size()
                          ? model.localization_categories[std::size_t(best_loc)]
                          : "category-" + std::to_string(best_loc);
  pred.membrane = best_mem == 0 ? kMembraneBound : kWaterSoluble;
  return pred;
}

void save_head_model(const HeadModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write model file: " + path);
  out.write(kMagic, 4);
  io::write_pod<std::uint16_t>(out, kVersion);
  io::write_pod<std::uint8_t>(out, std::uint8_t(model.kind));
  nlohmann::json meta{
      {"kind", head_kind_name(model.kind)},
      {"input_width", model.input_width},
      {"epochs_trained", model.epochs_trained},
      {"seed", model.seed},
      {"validation_score", model.validation_score},
      {"localization_categories", model.localization_categories},
      {"hyper",
       {{"learning_rate", model.hyper.learning_rate},
        {"batch_proteins", model.hyper.batch_proteins},
        {"max_epochs", model.hyper.max_epochs},
        {"patience", model.hyper.patience},
        {"validation_split", model.hyper.validation_split},
        {"conv_window", model.hyper.conv_window},
        {"compress_width", model.hyper.compress_width},
        {"lstm_hidden", model.hyper.lstm_hidden}}}};
  const std::string header = meta.dump();
  io::write_pod<std::uint32_t>(out, std::uint32_t(header.size()));
  io::write_bytes(out, header);
  for (const auto& [name, mat] : model.params) {
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

HeadModel load_head_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4))
    throw FormatError("bad magic in model file: " + path);
  if (io::read_pod<std::uint16_t>(in, path) != kVersion)
    throw FormatError("unsupported model file version: " + path);
  io::read_pod<std::uint8_t>(in, path);  // kind byte; authoritative copy in JSON

  const auto header_len = io::read_pod<std::uint32_t>(in, path);
  const std::string header = io::read_bytes(in, header_len, path);
  HeadModel model;
  try {
    const auto j = nlohmann::json::parse(header);
    model.kind = head_kind_from_name(j.at("kind").get<std::string>());
    model.input_width = j.at("input_width").get<int>();
    model.epochs_trained = j.at("epochs_trained").get<long>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.validation_score = j.at("validation_score").get<double>();
    model.localization_categories =
        j.at("localization_categories").get<std::vector<std::string>>();
    const auto& h = j.at("hyper");
    model.hyper.learning_rate = h.at("learning_rate").get<double>();
    model.hyper.batch_proteins = h.at("batch_proteins").get<int>();
    model.hyper.max_epochs = h.at("max_epochs").get<int>();
    model.hyper.patience = h.at("patience").get<int>();
    model.hyper.validation_split = h.at("validation_split").get<double>();
    model.hyper.conv_window = h.at("conv_window").get<int>();
    model.hyper.compress_width = h.at("compress_width").get<int>();
    model.hyper.lstm_hidden = h.at("lstm_hidden").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad model header in " + path + ": " + e.what());
  }

  const ParamMap<float> expected =
      head_param_shapes<float>(model.kind, model.input_width, model.hyper);
  while (true) {
    std::uint16_t name_len;
    in.read(reinterpret_cast<char*>(&name_len), sizeof name_len);
    if (in.eof()) break;
    if (!in) throw FormatError("truncated file: " + path);
    const std::string name = io::read_bytes(in, name_len, path);
    const auto rank = io::read_pod<std::uint8_t>(in, path);
    if (rank != 1 && rank != 2) throw FormatError("bad parameter rank in " + path);
    std::uint32_t rows = 1, cols;
    if (rank == 2) rows = io::read_pod<std::uint32_t>(in, path);
    cols = io::read_pod<std::uint32_t>(in, path);
    nn::Mat<float> mat(rows, cols);
    in.read(reinterpret_cast<char*>(mat.data()),
            std::streamsize(sizeof(float)) * mat.size());
    if (!in) throw FormatError("truncated file: " + path);
    model.params.emplace(name, std::move(mat));
  }
  if (model.params.size() != expected.size())
    throw FormatError("model parameter set does not match kind: " + path);
  for (const auto& [name, mat] : expected) {
    auto it = model.params.find(name);
    if (it == model.params.end() || it->second.rows() != mat.rows() ||
        it->second.cols() != mat.cols())
      throw FormatError("model parameter " + name + " missing or misshapen: " + path);
  }
  return model;
}

}  // namespace plmkit

#pragma once

#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "plmkit/encoder.hpp"
#include "plmkit/graph.hpp"

namespace plmkit {

// ---- secondary-structure label alphabets ----

// 8-state alphabet in fixed class order; '-' is coil/irregular.
inline constexpr const char* kSs8Alphabet = "HE-STGBI";
inline constexpr const char* kSs3Alphabet = "HE-";  // Helix, Strand, Other

int ss8_index(char c);
int ss3_index(char c);

// DSSP coarse-graining: H,G,I -> Helix; E,B -> Strand; -,S,T -> Other.
char map_ss8_to_ss3(char ss8);

struct ResidueLabelSet {
  std::string id;
  std::string sequence;
  std::string ss8;
  std::string ss3;  // derived via map_ss8_to_ss3
};

// TSV: id <TAB> sequence <TAB> ss8-string (equal lengths).
std::vector<ResidueLabelSet> parse_residue_labels(std::istream& in);

struct ProteinLabel {
  std::string id;
  std::string localization;  // empty when absent
  std::string membrane;      // "membrane-bound" | "water-soluble" | empty
};

// TSV: id <TAB> localization <TAB> membrane-flag, '-' for absent fields.
std::vector<ProteinLabel> parse_protein_labels(std::istream& in);

inline constexpr int kLocalizationClasses = 10;
inline constexpr int kMembraneClasses = 2;  // 0 membrane-bound, 1 water-soluble

// ---- head models ----

enum class HeadKind { LogReg, Fnn, Cnn, Lstm, ProteinFnn };

const char* head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& s);

struct HeadHyper {
  double learning_rate = 1e-3;
  int batch_proteins = 16;
  int max_epochs = 100;
  int patience = 10;          // early stopping on validation score
  double validation_split = 0.1;
  int conv_window = 7;
  int compress_width = 32;    // CNN/FNN compression width, protein hidden
  int lstm_hidden = 16;       // per direction
};

struct HeadModel {
  HeadKind kind = HeadKind::Cnn;
  int input_width = 0;
  HeadHyper hyper;
  ParamMap<float> params;
  long epochs_trained = 0;
  std::uint64_t seed = 0;
  double validation_score = 0.0;  // Q3 (residue) or Q10 (protein), percent
  std::vector<std::string> localization_categories;  // protein head only
};

// parameter shapes for a head kind (values uninitialized)
template <typename S>
ParamMap<S> head_param_shapes(HeadKind kind, int input_width, const HeadHyper& hyper);

template <typename S>
ParamMap<S> init_head_params(HeadKind kind, int input_width, const HeadHyper& hyper,
                             std::uint64_t seed);

// ---- forward graphs (templated so gradient checks can run in 64-bit) ----

template <typename S>
struct ResidueHeadOut {
  nn::NodeRef<S> logits3;  // L x 3
  nn::NodeRef<S> logits8;  // L x 8
};

template <typename S>
ResidueHeadOut<S> residue_head_forward(
    nn::Graph<S>& g, HeadKind kind, const HeadHyper& hyper,
    const std::map<std::string, nn::NodeRef<S>>& params, nn::NodeRef<S> features);

template <typename S>
struct ProteinHeadOut {
  nn::NodeRef<S> logits_loc;  // B x 10
  nn::NodeRef<S> logits_mem;  // B x 2
};

template <typename S>
ProteinHeadOut<S> protein_head_forward(
    nn::Graph<S>& g, const HeadHyper& hyper,
    const std::map<std::string, nn::NodeRef<S>>& params, nn::NodeRef<S> pooled);

// ---- training ----

struct ResidueExample {
  std::string id;
  nn::Mat<float> features;  // L x input_width
  std::string ss8;          // length L
};

HeadModel train_residue_head(HeadKind kind, const std::vector<ResidueExample>& data,
                             const HeadHyper& hyper, std::uint64_t seed);

struct ResiduePrediction {
  nn::Mat<float> dist3;  // L x 3 probabilities
  nn::Mat<float> dist8;  // L x 8
  std::string ss3;       // argmax labels, ties to the lowest index
  std::string ss8;
};

ResiduePrediction predict_residue(const HeadModel& model, const nn::Mat<float>& features);

struct ProteinExample {
  std::string id;
  Eigen::RowVectorXf pooled;
  std::string localization;  // empty = unlabeled
  std::string membrane;      // empty = unlabeled
};

HeadModel train_protein_head(const std::vector<ProteinExample>& data,
                             const HeadHyper& hyper, std::uint64_t seed);

struct ProteinPrediction {
  Eigen::RowVectorXf dist_loc;  // 10 probabilities
  Eigen::RowVectorXf dist_mem;  // 2 probabilities
  std::string localization;
  std::string membrane;
};

ProteinPrediction predict_protein(const HeadModel& model,
                                  const Eigen::RowVectorXf& pooled);

// ---- model files (PLMH) ----

void save_head_model(const HeadModel& model, const std::string& path);
HeadModel load_head_model(const std::string& path);

// ---- template definitions ----

template <typename S>
ParamMap<S> head_param_shapes(HeadKind kind, int input_width, const HeadHyper& hyper) {
  using nn::Mat;
  if (input_width < 1) throw ContractError("head: input width must be >= 1");
  ParamMap<S> p;
  const int cw = hyper.compress_width;
  switch (kind) {
    case HeadKind::LogReg:
      p["w3"] = Mat<S>(input_width, 3);
      p["b3"] = Mat<S>(1, 3);
      p["w8"] = Mat<S>(input_width, 8);
      p["b8"] = Mat<S>(1, 8);
      return p;
    case HeadKind::Fnn:
      p["compress.w"] = Mat<S>(input_width, cw);
      p["compress.b"] = Mat<S>(1, cw);
      p["w3"] = Mat<S>(cw, 3);
      p["b3"] = Mat<S>(1, 3);
      p["w8"] = Mat<S>(cw, 8);
      p["b8"] = Mat<S>(1, 8);
      return p;
    case HeadKind::Cnn:
      p["conv_in.w"] = Mat<S>(hyper.conv_window * input_width, cw);
      p["conv_in.b"] = Mat<S>(1, cw);
      p["conv3.w"] = Mat<S>(hyper.conv_window * cw, 3);
      p["conv3.b"] = Mat<S>(1, 3);
      p["conv8.w"] = Mat<S>(hyper.conv_window * cw, 8);
      p["conv8.b"] = Mat<S>(1, 8);
      return p;
    case HeadKind::Lstm: {
      const int h = hyper.lstm_hidden;
      for (const char* dir : {"fwd", "bwd"}) {
        p[std::string(dir) + ".wx"] = Mat<S>(input_width, 4 * h);
        p[std::string(dir) + ".wh"] = Mat<S>(h, 4 * h);
        p[std::string(dir) + ".b"] = Mat<S>(1, 4 * h);
      }
      p["w3"] = Mat<S>(2 * h, 3);
      p["b3"] = Mat<S>(1, 3);
      p["w8"] = Mat<S>(2 * h, 8);
      p["b8"] = Mat<S>(1, 8);
      return p;
    }
    case HeadKind::ProteinFnn:
      p["compress.w"] = Mat<S>(input_width, cw);
      p["compress.b"] = Mat<S>(1, cw);
      p["loc.w"] = Mat<S>(cw, kLocalizationClasses);
      p["loc.b"] = Mat<S>(1, kLocalizationClasses);
      p["mem.w"] = Mat<S>(cw, kMembraneClasses);
      p["mem.b"] = Mat<S>(1, kMembraneClasses);
      return p;
  }
  throw ContractError("unknown head kind");
}

template <typename S>
ParamMap<S> init_head_params(HeadKind kind, int input_width, const HeadHyper& hyper,
                             std::uint64_t seed) {
  ParamMap<S> params = head_param_shapes<S>(kind, input_width, hyper);
  Rng rng(seed);
  for (auto& [name, mat] : params) {
    const std::string last = name.substr(name.rfind('.') + 1);
    if (last[0] == 'b') {  // bias names: b, b3, b8
      mat.setZero();
    } else {
      for (Eigen::Index i = 0; i < mat.size(); ++i)
        mat.data()[i] = S(rng.truncated_normal(0.02));
    }
  }
  return params;
}

template <typename S>
ResidueHeadOut<S> residue_head_forward(
    nn::Graph<S>& g, HeadKind kind, const HeadHyper& hyper,
    const std::map<std::string, nn::NodeRef<S>>& params, nn::NodeRef<S> features) {
  using namespace nn;
  auto P = [&](const std::string& name) -> NodeRef<S> {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("head forward: missing param " + name);
    return it->second;
  };
  switch (kind) {
    case HeadKind::LogReg:
      return {add_row_bias(matmul(features, P("w3")), P("b3")),
              add_row_bias(matmul(features, P("w8")), P("b8"))};
    case HeadKind::Fnn: {
      auto h = relu(add_row_bias(matmul(features, P("compress.w")), P("compress.b")));
      return {add_row_bias(matmul(h, P("w3")), P("b3")),
              add_row_bias(matmul(h, P("w8")), P("b8"))};
    }
    case HeadKind::Cnn: {
      auto h = relu(conv1d_same(features, P("conv_in.w"), P("conv_in.b"),
                                hyper.conv_window));
      return {conv1d_same(h, P("conv3.w"), P("conv3.b"), hyper.conv_window),
              conv1d_same(h, P("conv8.w"), P("conv8.b"), hyper.conv_window)};
    }
    case HeadKind::Lstm: {
      auto fwd = lstm_seq(features, P("fwd.wx"), P("fwd.wh"), P("fwd.b"), false);
      auto bwd = lstm_seq(features, P("bwd.wx"), P("bwd.wh"), P("bwd.b"), true);
      auto h = concat_cols(fwd, bwd);
      return {add_row_bias(matmul(h, P("w3")), P("b3")),
              add_row_bias(matmul(h, P("w8")), P("b8"))};
    }
    case HeadKind::ProteinFnn:
      throw ContractError("protein head is not a residue head");
  }
  throw ContractError("unknown head kind");
}

template <typename S>
ProteinHeadOut<S> protein_head_forward(
    nn::Graph<S>& g, const HeadHyper& hyper,
    const std::map<std::string, nn::NodeRef<S>>& params, nn::NodeRef<S> pooled) {
  using namespace nn;
  (void)g;
  (void)hyper;
  auto P = [&](const std::string& name) -> NodeRef<S> {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("head forward: missing param " + name);
    return it->second;
  };
  auto h = relu(add_row_bias(matmul(pooled, P("compress.w")), P("compress.b")));
  return {add_row_bias(matmul(h, P("loc.w")), P("loc.b")),
          add_row_bias(matmul(h, P("mem.w")), P("mem.b"))};
}

}  // namespace plmkit

#include "plmkit/viz.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace plmkit {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// categorical 10-color palette
constexpr const char* kPalette[10] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                      "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                      "#bcbd22", "#17becf"};

}  // namespace

std::vector<Annotation> parse_annotations(std::istream& in) {
  std::vector<Annotation> out;
  std::set<std::string> seen;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() < 2 || fields[0].empty())
      throw ParseError("annotations line " + std::to_string(line_no) +
                       ": expected id<TAB>label");
    Annotation a;
    a.id = fields[0];
    if (!seen.insert(a.id).second)
      throw ParseError("annotations line " + std::to_string(line_no) +
                       ": duplicate id '" + a.id + "'");
    for (std::size_t f = 1; f < fields.size(); ++f) {
      const auto eq = fields[f].find('=');
      if (eq == std::string::npos)
        a.columns["label"] = fields[f];
      else
        a.columns[fields[f].substr(0, eq)] = fields[f].substr(eq + 1);
    }
    out.push_back(std::move(a));
  }
  return out;
}

ProjectionResult project_embeddings(
    const std::vector<std::pair<std::string, Eigen::RowVectorXf>>& embeddings,
    const std::vector<Annotation>& annotations, const std::string& column,
    const TsneParams& params) {
  if (embeddings.empty()) throw UserError("project: no embeddings");

  std::map<std::string, std::string> label_of;
  for (const auto& a : annotations) {
    const auto it = a.columns.find(column);
    if (it != a.columns.end()) label_of[a.id] = it->second;
  }

  ProjectionResult result;
  result.params = params;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (label_of.count(embeddings[i].first))
      kept.push_back(i);
    else
      result.missing_annotations.push_back(embeddings[i].first);
  }
  if (kept.empty()) throw UserError("project: no embeddings with annotations");

  nn::Mat<double> points(Eigen::Index(kept.size()), embeddings.front().second.cols());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    if (embeddings[kept[k]].second.cols() != points.cols())
      throw UserError("project: embedding widths differ");
    points.row(Eigen::Index(k)) = embeddings[kept[k]].second.cast<double>();
  }

  auto tsne_result = tsne(points, params);
  result.initial_kl = tsne_result.initial_kl;
  result.final_kl = tsne_result.final_kl;
  result.max_entropy_error = tsne_result.max_entropy_error;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto& [id, _] = embeddings[kept[k]];
    result.points.push_back({id, tsne_result.coords(Eigen::Index(k), 0),
                             tsne_result.coords(Eigen::Index(k), 1), label_of.at(id)});
  }
  return result;
}

void write_coords_csv(const ProjectionResult& result, std::ostream& out) {
  out << "id,x,y,label\n";
  for (const auto& p : result.points)
    out << p.id << ',' << fmt(p.x) << ',' << fmt(p.y) << ',' << p.label << '\n';
}

void write_scatter_svg(const ProjectionResult& result, std::ostream& out) {
  std::vector<std::string> labels;
  for (const auto& p : result.points)
    if (std::find(labels.begin(), labels.end(), p.label) == labels.end())
      labels.push_back(p.label);
  std::sort(labels.begin(), labels.end());

  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (const auto& p : result.points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double span_x = std::max(max_x - min_x, 1e-9);
  const double span_y = std::max(max_y - min_y, 1e-9);
  const double W = 640, H = 640, margin = 40, legend_w = 170;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W + legend_w
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W + legend_w << " " << H
      << "\">\n";
  out << "<rect width=\"" << W + legend_w << "\" height=\"" << H
      << "\" fill=\"white\"/>\n";
  for (const auto& p : result.points) {
    const double sx = margin + (p.x - min_x) / span_x * (W - 2 * margin);
    const double sy = H - margin - (p.y - min_y) / span_y * (H - 2 * margin);
    const std::size_t color =
        std::size_t(std::find(labels.begin(), labels.end(), p.label) - labels.begin());
    out << "<circle cx=\"" << fmt(sx) << "\" cy=\"" << fmt(sy)
        << "\" r=\"3\" fill=\"" << kPalette[color % 10]
        << "\" fill-opacity=\"0.75\"/>\n";
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double ly = 30 + 22 * double(i);
    out << "<circle cx=\"" << W + 18 << "\" cy=\"" << fmt(ly) << "\" r=\"5\" fill=\""
        << kPalette[i % 10] << "\"/>\n";
    out << "<text x=\"" << W + 30 << "\" y=\"" << fmt(ly + 4)
        << "\" font-family=\"sans-serif\" font-size=\"13\">" << labels[i]
        << "</text>\n";
  }
  out << "</svg>\n";
}

AttentionMap attention_map(const Checkpoint& ckpt, const SequenceRecord& protein,
                           int layer, int head, int top_k) {
  if (layer < 0 || layer >= ckpt.config.layers)
    throw UserError("attention_map: layer " + std::to_string(layer) +
                    " out of range (model has " + std::to_string(ckpt.config.layers) +
                    ")");
  if (head < 0 || head >= ckpt.config.heads)
    throw UserError("attention_map: head " + std::to_string(head) +
                    " out of range (model has " + std::to_string(ckpt.config.heads) +
                    ")");
  const TokenSeq tokens = tokenize(protein);
  const Eigen::Index L = Eigen::Index(tokens.ids.size());
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> inputs(1, L);
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> valid(1, L);
  for (Eigen::Index t = 0; t < L; ++t) {
    inputs(0, t) = int(tokens.ids[std::size_t(t)]);
    valid(0, t) = 1;
  }
  auto result = encode(ckpt, inputs, valid, true);

  AttentionMap map;
  map.protein_id = protein.id;
  map.layer = layer;
  map.head = head;
  map.weights = result.attention[std::size_t(layer)][std::size_t(head)];

  const int k = std::min<int>(top_k, int(L));
  map.top_attended.resize(std::size_t(L));
  for (Eigen::Index q = 0; q < L; ++q) {
    std::vector<std::pair<Eigen::Index, float>> order;
    for (Eigen::Index c = 0; c < L; ++c) order.emplace_back(c, map.weights(q, c));
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    order.resize(std::size_t(k));
    map.top_attended[std::size_t(q)] = std::move(order);
  }
  return map;
}

void write_attention_csv(const AttentionMap& map, std::ostream& out) {
  for (Eigen::Index r = 0; r < map.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.weights.cols(); ++c) {
      if (c) out << ',';
      out << fmt(double(map.weights(r, c)));
    }
    out << '\n';
  }
}

void write_attention_svg(const AttentionMap& map, const SequenceRecord& protein,
                         std::ostream& out) {
  const Eigen::Index L = map.weights.rows();
  const double cell = std::max(2.0, std::min(14.0, 560.0 / double(L)));
  const double margin = 24;
  const double size = margin * 2 + cell * double(L);
  const float peak = map.weights.maxCoeff();

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(size)
      << "\" height=\"" << fmt(size) << "\" viewBox=\"0 0 " << fmt(size) << " "
      << fmt(size) << "\">\n";
  out << "<rect width=\"" << fmt(size) << "\" height=\"" << fmt(size)
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << fmt(margin) << "\" y=\"16\" font-family=\"sans-serif\" "
      << "font-size=\"12\">" << protein.id << " layer " << map.layer << " head "
      << map.head << "</text>\n";
  for (Eigen::Index r = 0; r < L; ++r)
    for (Eigen::Index c = 0; c < L; ++c) {
      const double v = peak > 0 ? double(map.weights(r, c)) / double(peak) : 0.0;
      const int shade = int(255.0 * (1.0 - v));
      out << "<rect x=\"" << fmt(margin + cell * double(c)) << "\" y=\""
          << fmt(margin + cell * double(r)) << "\" width=\"" << fmt(cell)
          << "\" height=\"" << fmt(cell) << "\" fill=\"rgb(255," << shade << ","
          << shade << ")\"/>\n";
    }
  out << "</svg>\n";
}

void write_top_attended_tsv(const AttentionMap& map, const SequenceRecord& protein,
                            std::ostream& out) {
  out << "query_pos\tquery_residue\trank\tattended_pos\tattended_residue\tweight\n";
  for (std::size_t q = 0; q < map.top_attended.size(); ++q) {
    for (std::size_t r = 0; r < map.top_attended[q].size(); ++r) {
      const auto& [pos, w] = map.top_attended[q][r];
      out << q << '\t' << protein.residues[q] << '\t' << r + 1 << '\t' << pos
          << '\t' << protein.residues[std::size_t(pos)] << '\t' << fmt(double(w))
          << '\n';
    }
  }
}

}  // namespace plmkit

#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "plmkit/encoder.hpp"
#include "plmkit/fasta.hpp"
#include "plmkit/tsne.hpp"

namespace plmkit {

// Annotation TSV: `id<TAB>label` or `id<TAB>key=value<TAB>key=value...`.
// The simple form is stored under the column name "label".
struct Annotation {
  std::string id;
  std::map<std::string, std::string> columns;
};

std::vector<Annotation> parse_annotations(std::istream& in);

struct ProjectionPoint {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  std::string label;
};

struct ProjectionResult {
  std::vector<ProjectionPoint> points;
  TsneParams params;
  double initial_kl = 0.0;
  double final_kl = 0.0;
  double max_entropy_error = 0.0;
  std::vector<std::string> missing_annotations;  // ids excluded for lack of a label
};

// Join embeddings with annotations on id (unannotated ids are excluded and
// reported), then project with t-SNE.
ProjectionResult project_embeddings(
    const std::vector<std::pair<std::string, Eigen::RowVectorXf>>& embeddings,
    const std::vector<Annotation>& annotations, const std::string& column,
    const TsneParams& params);

void write_coords_csv(const ProjectionResult& result, std::ostream& out);
void write_scatter_svg(const ProjectionResult& result, std::ostream& out);

// ---- attention maps ----

struct AttentionMap {
  std::string protein_id;
  int layer = 0;
  int head = 0;
  nn::Mat<float> weights;  // L x L, rows sum to 1
  // per query residue: the top-k attended positions, strongest first
  std::vector<std::vector<std::pair<Eigen::Index, float>>> top_attended;
};

AttentionMap attention_map(const Checkpoint& ckpt, const SequenceRecord& protein,
                           int layer, int head, int top_k = 4);

void write_attention_csv(const AttentionMap& map, std::ostream& out);
void write_attention_svg(const AttentionMap& map, const SequenceRecord& protein,
                         std::ostream& out);
void write_top_attended_tsv(const AttentionMap& map, const SequenceRecord& protein,
                            std::ostream& out);

}  // namespace plmkit

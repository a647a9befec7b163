// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nq/encoder.hpp"
#include "nq/nn.hpp"
#include "nq/tensor.hpp"

namespace nq {

enum class QueryBranch { kTemporal, kSpatial };

const char* branch_name(QueryBranch b);

struct TqsConfig {
  std::size_t pool_size = 16;     // N_q, per branch
  std::size_t d_e = 64;
  std::size_t router_hidden = 0;  // 0 -> d_e
  std::size_t k_temporal = 1;     // n_t
  std::size_t k_spatial = 2;      // n_s
  bool scale_by_scores = true;    // false: selected queries used verbatim
  std::uint64_t seed = 1;
};

struct RoutingDecision {
  QueryBranch branch = QueryBranch::kTemporal;
  std::vector<double> scores;         // softmax over the pool, sums to 1
  std::vector<std::size_t> selected;  // K largest, score-descending, ties -> lower index
  std::vector<double> renorm;         // selected scores / their sum
  std::string task_id;
  std::string sample_id;
  long step = 0;
};

/// Indices of the k largest values in score-descending order; equal scores
/// break toward the lower index.
std::vector<std::size_t> topk_indices(const std::vector<double>& scores, std::size_t k);

/// frequency[p] = (# times pool entry p was selected for task_id) / total
/// selections for that task. Throws on an empty log for the task.
std::vector<double> selection_frequency(const std::vector<RoutingDecision>& log,
                                        const std::string& task_id, std::size_t pool_size);

std::string routing_json(const RoutingDecision& d);
RoutingDecision parse_routing_json(const std::string& line);

// Per-branch learnable query pool + two-layer router MLP + static query.
// Routing is conditioned on the mean of the patch tokens (class excluded).
// Selected pool rows are scaled by renormalized scores so the router keeps
// a gradient path; TopK itself is hard.
class Tqs {
 public:
  explicit Tqs(const TqsConfig& cfg);

  std::pair<RoutingDecision, Tensor> route(const TokenEmbedding& e, QueryBranch branch) const;
  std::pair<RoutingDecision, Tensor> route(const TokenEmbedding& e, QueryBranch branch,
                                           std::size_t k) const;

  /// Adaptive rows in selection order, then the static row, unscaled.
  Tensor with_static(const Tensor& adaptive, QueryBranch branch) const;
  std::pair<Tensor, Tensor> assemble_queries(const Tensor& adaptive_t,
                                             const Tensor& adaptive_s) const;

  const Tensor& pool(QueryBranch b) const;
  const Tensor& static_query(QueryBranch b) const;
  const MlpParams& router(QueryBranch b) const;

  NamedParams& parameters() { return params_; }
  const NamedParams& parameters() const { return params_; }
  std::uint64_t fingerprint() const { return fingerprint_params(params_); }
  const TqsConfig& config() const { return cfg_; }

 private:
  struct BranchState {
    Tensor pool;        // N_q x D_e
    Tensor static_q;    // 1 x D_e
    MlpParams router;   // D_e -> hidden -> N_q
  };
  const BranchState& state(QueryBranch b) const;

  TqsConfig cfg_;
  BranchState temporal_, spatial_;
  NamedParams params_;
};

}  // namespace nq

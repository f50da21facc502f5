#pragma once

#include <cmath>
#include <map>
#include <string>

#include "plmkit/graph.hpp"

namespace plmkit::nn {

enum class OptimizerKind { Adam, Lamb, AdaFactor };

inline const char* optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::Lamb: return "lamb";
    case OptimizerKind::AdaFactor: return "adafactor";
  }
  return "?";
}

inline OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "lamb") return OptimizerKind::Lamb;
  if (s == "adafactor") return OptimizerKind::AdaFactor;
  throw ContractError("unknown optimizer kind: " + s);
}

struct OptimizerHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // AdaFactor specifics (defaults from its publication)
  double adafactor_eps1 = 1e-30;
  double adafactor_clip = 1.0;
  double adafactor_decay_exponent = 0.8;
};

// Per-parameter state. AdaFactor keeps factored row/column second-moment
// statistics for matrices and a full vector for rank-1 parameters.
template <typename S>
struct ParamState {
  Mat<S> m;        // Adam/LAMB first moment
  Mat<S> v;        // Adam/LAMB second moment, AdaFactor full stats for vectors
  Mat<S> row_acc;  // AdaFactor factored stats
  Mat<S> col_acc;
};

template <typename S>
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  OptimizerHyper hyper;
  long step = 0;
  std::map<std::string, ParamState<S>> params;
};

namespace detail {

template <typename S>
void adam_direction(Mat<S>& direction, const Mat<S>& grad, ParamState<S>& st,
                    const OptimizerHyper& h, long step) {
  if (st.m.size() == 0) {
    st.m = Mat<S>::Zero(grad.rows(), grad.cols());
    st.v = Mat<S>::Zero(grad.rows(), grad.cols());
  }
  if (st.m.rows() != grad.rows() || st.m.cols() != grad.cols())
    throw ContractError("optimizer state shape does not match gradient");
  st.m = S(h.beta1) * st.m + S(1 - h.beta1) * grad;
  st.v = S(h.beta2) * st.v + S(1 - h.beta2) * grad.cwiseProduct(grad);
  const S bc1 = S(1.0 - std::pow(h.beta1, double(step)));
  const S bc2 = S(1.0 - std::pow(h.beta2, double(step)));
  direction = (st.m / bc1).cwiseQuotient(
      ((st.v / bc2).cwiseSqrt().array() + S(h.eps)).matrix());
}

}  // namespace detail

// One update for a single named parameter. Deterministic; the caller applies
// the learning rate from the schedule.
template <typename S>
void optimizer_step_param(OptimizerState<S>& state, const std::string& name,
                          Mat<S>& value, const Mat<S>& grad, double lr) {
  if (value.rows() != grad.rows() || value.cols() != grad.cols())
    throw ContractError("optimizer_step: gradient shape mismatch for " + name);
  const OptimizerHyper& h = state.hyper;
  ParamState<S>& st = state.params[name];

  switch (state.kind) {
    case OptimizerKind::Adam: {
      Mat<S> direction;
      detail::adam_direction(direction, grad, st, h, state.step);
      if (h.weight_decay != 0.0) direction += S(h.weight_decay) * value;
      value -= S(lr) * direction;
      return;
    }
    case OptimizerKind::Lamb: {
      Mat<S> direction;
      detail::adam_direction(direction, grad, st, h, state.step);
      if (h.weight_decay != 0.0) direction += S(h.weight_decay) * value;
      const double wnorm = std::sqrt(double(value.cwiseProduct(value).sum()));
      const double dnorm = std::sqrt(double(direction.cwiseProduct(direction).sum()));
      const double trust = (wnorm == 0.0 || dnorm == 0.0) ? 1.0 : wnorm / dnorm;
      value -= S(lr * trust) * direction;
      return;
    }
    case OptimizerKind::AdaFactor: {
      // Factored second moments for matrices, exact for vectors; RMS update
      // clipping; decay beta2_t = 1 - t^-c.
      const double beta2t =
          1.0 - std::pow(double(state.step), -h.adafactor_decay_exponent);
      Mat<S> vhat;
      Mat<S> g2 = (grad.array().square() + S(h.adafactor_eps1)).matrix();
      if (value.rows() > 1 && value.cols() > 1) {
        if (st.row_acc.size() == 0) {
          st.row_acc = Mat<S>::Zero(value.rows(), 1);
          st.col_acc = Mat<S>::Zero(1, value.cols());
        }
        if (st.row_acc.rows() != value.rows() || st.col_acc.cols() != value.cols())
          throw ContractError("optimizer state shape does not match gradient");
        st.row_acc = S(beta2t) * st.row_acc + S(1 - beta2t) * g2.rowwise().mean();
        st.col_acc = S(beta2t) * st.col_acc + S(1 - beta2t) * g2.colwise().mean();
        const S row_mean = st.row_acc.mean();
        vhat = (st.row_acc * st.col_acc) / row_mean;
      } else {
        if (st.v.size() == 0) st.v = Mat<S>::Zero(value.rows(), value.cols());
        st.v = S(beta2t) * st.v + S(1 - beta2t) * g2;
        vhat = st.v;
      }
      Mat<S> update = grad.cwiseQuotient(vhat.cwiseSqrt());
      const double rms =
          std::sqrt(double(update.cwiseProduct(update).mean()));
      if (rms > h.adafactor_clip) update *= S(h.adafactor_clip / rms);
      if (h.weight_decay != 0.0) update += S(h.weight_decay) * value;
      value -= S(lr) * update;
      return;
    }
  }
  throw ContractError("unknown optimizer kind");
}

// Batched variant over a whole named parameter set.
template <typename S>
void optimizer_step(OptimizerState<S>& state,
                    std::map<std::string, Mat<S>>& params,
                    const std::map<std::string, Mat<S>>& grads, double lr) {
  if (lr < 0) throw ContractError("optimizer_step: negative learning rate");
  state.step++;
  for (auto& [name, value] : params) {
    auto it = grads.find(name);
    if (it == grads.end())
      throw ContractError("optimizer_step: missing gradient for " + name);
    optimizer_step_param(state, name, value, it->second, lr);
  }
}

}  // namespace plmkit::nn

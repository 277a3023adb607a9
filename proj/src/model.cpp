#include "deconf/model.hpp"

#include <algorithm>
#include <cmath>

#include "deconf/error.hpp"
#include "deconf/rng.hpp"

namespace deconf {

namespace {

constexpr int kSinkhornIterations = 50;
constexpr double kEpsilonFraction = 0.1;   // of the median pairwise cost
constexpr double kProbabilityClamp = 1e-7;
constexpr double kDistanceFloor = 1e-24;   // inside the sqrt of the cost matrix

Matrix glorot(Rng& rng, int fan_in, int fan_out, int rows, int cols) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-a, a);
  return m;
}

}  // namespace

ModelParams ModelParams::init(const ModelDims& dims, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams p;
  p.dims = dims;
  const int d_in = dims.d_x + dims.d_h;      // GCN input
  const int d_rec = dims.d_z + dims.d_x + 2; // GRU input: Z (+) X (+) C (+) Y

  p.gcn_w0 = glorot(rng, d_in, dims.d_g, d_in, dims.d_g);
  p.gcn_w1 = glorot(rng, dims.d_g, dims.d_z, dims.d_g, dims.d_z);

  auto gate = [&](Matrix& w, Matrix& u, Matrix& b) {
    w = glorot(rng, d_rec, dims.d_h, d_rec, dims.d_h);
    u = glorot(rng, dims.d_h, dims.d_h, dims.d_h, dims.d_h);
    b = Matrix(1, dims.d_h);
  };
  gate(p.gru.w_reset, p.gru.u_reset, p.gru.b_reset);
  gate(p.gru.w_update, p.gru.u_update, p.gru.b_update);
  gate(p.gru.w_cand, p.gru.u_cand, p.gru.b_cand);

  auto head = [&](MlpHead& h) {
    h.w_hidden = glorot(rng, dims.d_z, dims.d_o, dims.d_z, dims.d_o);
    h.b_hidden = Matrix(1, dims.d_o);
    h.w_out = glorot(rng, dims.d_o, 1, dims.d_o, 1);
    h.b_out = Matrix(1, 1);
  };
  head(p.head_treated);
  head(p.head_control);

  p.treat_w = glorot(rng, dims.d_z, 2, dims.d_z, 2);
  p.treat_b = Matrix(1, 2);
  return p;
}

ParamRefs ModelParams::refs() {
  return {
      {"gcn_w0", &gcn_w0},
      {"gcn_w1", &gcn_w1},
      {"gru_w_reset", &gru.w_reset},
      {"gru_u_reset", &gru.u_reset},
      {"gru_b_reset", &gru.b_reset},
      {"gru_w_update", &gru.w_update},
      {"gru_u_update", &gru.u_update},
      {"gru_b_update", &gru.b_update},
      {"gru_w_cand", &gru.w_cand},
      {"gru_u_cand", &gru.u_cand},
      {"gru_b_cand", &gru.b_cand},
      {"f1_w_hidden", &head_treated.w_hidden},
      {"f1_b_hidden", &head_treated.b_hidden},
      {"f1_w_out", &head_treated.w_out},
      {"f1_b_out", &head_treated.b_out},
      {"f0_w_hidden", &head_control.w_hidden},
      {"f0_b_hidden", &head_control.b_hidden},
      {"f0_w_out", &head_control.w_out},
      {"f0_b_out", &head_control.b_out},
      {"treat_w", &treat_w},
      {"treat_b", &treat_b},
  };
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::refs() const {
  auto mutable_refs = const_cast<ModelParams*>(this)->refs();
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mutable_refs.size());
  for (auto& [name, m] : mutable_refs) out.emplace_back(name, m);
  return out;
}

double ModelParams::squared_norm() const {
  double s = 0.0;
  for (const auto& [name, m] : refs())
    for (double v : m->values()) s += v * v;
  return s;
}

void ModelParams::require_all_finite() const {
  for (const auto& [name, m] : refs()) require_finite(*m, "parameter '" + name + "'");
}

OutcomeTransform OutcomeTransform::fit(const Matrix& y, const std::vector<int>& units) {
  if (units.empty()) throw DataError("outcome transform needs at least one unit");
  OutcomeTransform t;
  double sum = 0.0;
  const double count = static_cast<double>(units.size()) * y.rows();
  for (int period = 0; period < y.rows(); ++period)
    for (int u : units) sum += std::log1p(y(period, u));
  t.mean = sum / count;
  double var = 0.0;
  for (int period = 0; period < y.rows(); ++period)
    for (int u : units) {
      const double c = std::log1p(y(period, u)) - t.mean;
      var += c * c;
    }
  t.sd = std::sqrt(var / count);
  if (t.sd < 1e-12) t.sd = 1.0;  // constant outcomes
  return t;
}

double OutcomeTransform::apply(double y) const { return (std::log1p(y) - mean) / sd; }
double OutcomeTransform::invert(double v) const { return std::expm1(v * sd + mean); }

Matrix OutcomeTransform::apply_all(const Matrix& y) const {
  Matrix out = y;
  for (double* p = out.data(); p != out.data() + out.size(); ++p) *p = apply(*p);
  return out;
}

// ---------------------------------------------------------------------------
// Tape builders shared by training, inference and the plain-matrix wrappers.

namespace {

struct ParamVars {
  Var gcn_w0, gcn_w1;
  Var gru_w_reset, gru_u_reset, gru_b_reset;
  Var gru_w_update, gru_u_update, gru_b_update;
  Var gru_w_cand, gru_u_cand, gru_b_cand;
  Var f1_w_hidden, f1_b_hidden, f1_w_out, f1_b_out;
  Var f0_w_hidden, f0_b_hidden, f0_w_out, f0_b_out;
  Var treat_w, treat_b;
};

ParamVars register_params(Tape& tape, const ModelParams& p) {
  ParamVars v;
  v.gcn_w0 = tape.param("gcn_w0", p.gcn_w0);
  v.gcn_w1 = tape.param("gcn_w1", p.gcn_w1);
  v.gru_w_reset = tape.param("gru_w_reset", p.gru.w_reset);
  v.gru_u_reset = tape.param("gru_u_reset", p.gru.u_reset);
  v.gru_b_reset = tape.param("gru_b_reset", p.gru.b_reset);
  v.gru_w_update = tape.param("gru_w_update", p.gru.w_update);
  v.gru_u_update = tape.param("gru_u_update", p.gru.u_update);
  v.gru_b_update = tape.param("gru_b_update", p.gru.b_update);
  v.gru_w_cand = tape.param("gru_w_cand", p.gru.w_cand);
  v.gru_u_cand = tape.param("gru_u_cand", p.gru.u_cand);
  v.gru_b_cand = tape.param("gru_b_cand", p.gru.b_cand);
  v.f1_w_hidden = tape.param("f1_w_hidden", p.head_treated.w_hidden);
  v.f1_b_hidden = tape.param("f1_b_hidden", p.head_treated.b_hidden);
  v.f1_w_out = tape.param("f1_w_out", p.head_treated.w_out);
  v.f1_b_out = tape.param("f1_b_out", p.head_treated.b_out);
  v.f0_w_hidden = tape.param("f0_w_hidden", p.head_control.w_hidden);
  v.f0_b_hidden = tape.param("f0_b_hidden", p.head_control.b_hidden);
  v.f0_w_out = tape.param("f0_w_out", p.head_control.w_out);
  v.f0_b_out = tape.param("f0_b_out", p.head_control.b_out);
  v.treat_w = tape.param("treat_w", p.treat_w);
  v.treat_b = tape.param("treat_b", p.treat_b);
  return v;
}

/// Broadcast a 1 x d bias over n rows.
Var broadcast_bias(Tape& tape, Var ones_n1, Var bias) { return tape.matmul(ones_n1, bias); }

Var encode_node(Tape& tape, Var h_prev, Var x, const Var* ahat, const ParamVars& pv) {
  Var xh = tape.concat_cols(x, h_prev);
  Var pre = ahat ? tape.matmul(*ahat, xh) : xh;
  Var hidden = tape.relu(tape.matmul(pre, pv.gcn_w0));
  Var prop = ahat ? tape.matmul(*ahat, hidden) : hidden;
  return tape.matmul(prop, pv.gcn_w1);
}

Var gru_node(Tape& tape, Var h_prev, Var input, Var ones_n1, const ParamVars& pv) {
  Var reset = tape.sigmoid(tape.matmul(input, pv.gru_w_reset) +
                           tape.matmul(h_prev, pv.gru_u_reset) +
                           broadcast_bias(tape, ones_n1, pv.gru_b_reset));
  Var update = tape.sigmoid(tape.matmul(input, pv.gru_w_update) +
                            tape.matmul(h_prev, pv.gru_u_update) +
                            broadcast_bias(tape, ones_n1, pv.gru_b_update));
  Var cand = tape.tanh(tape.matmul(input, pv.gru_w_cand) +
                       tape.matmul(tape.mul(reset, h_prev), pv.gru_u_cand) +
                       broadcast_bias(tape, ones_n1, pv.gru_b_cand));
  // h' = update (.) h_prev + (1 - update) (.) candidate
  Var keep = tape.mul(update, h_prev);
  Var ones_like = tape.constant(Matrix(update.rows(), update.cols(), 1.0));
  Var blend = tape.mul(tape.sub(ones_like, update), cand);
  return keep + blend;
}

Var head_node(Tape& tape, Var z, Var ones_n1, Var w_hidden, Var b_hidden, Var w_out, Var b_out) {
  Var hidden = tape.relu(tape.matmul(z, w_hidden) + broadcast_bias(tape, ones_n1, b_hidden));
  return tape.matmul(hidden, w_out) + broadcast_bias(tape, ones_n1, b_out);
}

Var treatment_node(Tape& tape, Var z, Var ones_n1, const ParamVars& pv) {
  Var logits = tape.matmul(z, pv.treat_w) + broadcast_bias(tape, ones_n1, pv.treat_b);
  // two-class softmax = sigmoid of the logit difference; shift invariant
  return tape.sigmoid(tape.slice_cols(logits, 1, 2) - tape.slice_cols(logits, 0, 1));
}

/// Entropic transport cost between the rows of two point sets, unrolled
/// through the tape so the loss stays differentiable in both inputs.
Var sinkhorn_cost_node(Tape& tape, Var rows_pts, Var cols_pts) {
  const int m = rows_pts.rows();
  const int k = cols_pts.rows();
  const int d = rows_pts.cols();

  Var ones_d1 = tape.constant(Matrix(d, 1, 1.0));
  Var ones_m1 = tape.constant(Matrix(m, 1, 1.0));
  Var ones_1k = tape.constant(Matrix(1, k, 1.0));

  Var sq_rows = tape.matmul(tape.square(rows_pts), ones_d1);  // m x 1
  Var sq_cols = tape.matmul(tape.square(cols_pts), ones_d1);  // k x 1
  Var cross = tape.matmul(rows_pts, tape.transpose(cols_pts));
  Var r2 = tape.matmul(sq_rows, ones_1k) + tape.matmul(ones_m1, tape.transpose(sq_cols)) -
           tape.mul_scalar(cross, 2.0);
  Var cost = tape.sqrt(tape.add_scalar(tape.relu(r2), kDistanceFloor));  // m x k

  // epsilon = 0.1 x median cost. The median is selected from the forward
  // values but re-read through a gather so it stays differentiable; when the
  // median collapses the max entry takes over as the scale.
  const Matrix& cost_values = cost.value();
  std::vector<std::pair<double, int>> order;
  order.reserve(cost_values.size());
  for (int i = 0; i < static_cast<int>(cost_values.size()); ++i)
    order.emplace_back(cost_values.data()[i], i);
  std::nth_element(order.begin(), order.begin() + (order.size() - 1) / 2, order.end());
  const auto median_entry = order[(order.size() - 1) / 2];
  int scale_flat = median_entry.second;
  if (median_entry.first <= 1e-9 * cost_values.max_abs()) {
    for (int i = 0; i < static_cast<int>(cost_values.size()); ++i)
      if (cost_values.data()[i] > cost_values.data()[scale_flat]) scale_flat = i;
  }
  Var scale_entry = tape.slice_cols(tape.gather_rows(cost, {scale_flat / k}),
                                    scale_flat % k, scale_flat % k + 1);
  Var epsilon = tape.mul_scalar(scale_entry, kEpsilonFraction);  // 1 x 1
  Var eps_mk = tape.matmul(tape.matmul(ones_m1, epsilon), ones_1k);

  Var kernel = tape.exp(tape.neg(tape.div(cost, eps_mk)));  // m x k
  Var kernel_t = tape.transpose(kernel);

  Var mu = tape.constant(Matrix(m, 1, 1.0 / m));
  Var nu = tape.constant(Matrix(k, 1, 1.0 / k));
  Var v = tape.constant(Matrix(k, 1, 1.0));
  Var u{nullptr, -1};
  for (int it = 0; it < kSinkhornIterations; ++it) {
    u = tape.div(mu, tape.matmul(kernel, v));
    v = tape.div(nu, tape.matmul(kernel_t, u));
  }
  Var plan = tape.mul(tape.matmul(u, tape.transpose(v)), kernel);
  return tape.reduce_sum(tape.mul(plan, cost));
}

struct GroupSplit {
  std::vector<int> treated;
  std::vector<int> control;
};

GroupSplit split_by_treatment(const Matrix& c, const std::vector<int>& mask) {
  GroupSplit g;
  for (int u : mask) {
    if (c(u, 0) != 0.0)
      g.treated.push_back(u);
    else
      g.control.push_back(u);
  }
  return g;
}

/// Canonical orientation: the larger group indexes the rows; equal sizes are
/// broken by comparing the gathered values. This makes the loss exactly
/// symmetric in its two groups.
Var balancing_node(Tape& tape, Var z, const GroupSplit& groups, bool* degenerate) {
  if (groups.treated.empty() || groups.control.empty()) {
    if (degenerate) *degenerate = true;
    return tape.constant_scalar(0.0);
  }
  Var zt = tape.gather_rows(z, groups.treated);
  Var zc = tape.gather_rows(z, groups.control);
  if (zt.value().max_abs() == 0.0 && zc.value().max_abs() == 0.0) {
    // collapsed representations: both clouds sit at the origin, W1 = 0
    if (degenerate) *degenerate = true;
    return tape.constant_scalar(0.0);
  }
  bool treated_rows = groups.treated.size() > groups.control.size();
  if (groups.treated.size() == groups.control.size())
    treated_rows = zt.value().values() <= zc.value().values();
  return treated_rows ? sinkhorn_cost_node(tape, zt, zc) : sinkhorn_cost_node(tape, zc, zt);
}

Matrix column_as_matrix(const Matrix& m, int row) {
  Matrix out(m.cols(), 1);
  for (int j = 0; j < m.cols(); ++j) out(j, 0) = m(row, j);
  return out;
}

struct UnrollStep {
  Var z, y1, y0, s;
};

/// Shared unroll of encode -> heads for all periods; when `wiring.use_temporal`
/// the memory is advanced with the observed treatment and scaled outcome.
std::vector<UnrollStep> unroll_model(Tape& tape, const TrainingPanel& panel,
                                     const TemporalGraph& graph,
                                     const OutcomeTransform& transform, const ParamVars& pv,
                                     const ModelDims& dims, const ModelWiring& wiring,
                                     std::vector<Var>* c_consts, std::vector<Var>* y_consts) {
  const int n = panel.n;
  const int T = panel.T;
  Var ones_n1 = tape.constant(Matrix(n, 1, 1.0));

  std::vector<Var> ahat;
  if (wiring.use_graph) {
    const int distinct = graph.is_static ? 1 : T;
    for (int t = 0; t < distinct; ++t) ahat.push_back(tape.constant(graph.renormalized[t]));
  }

  Var h = tape.constant(Matrix(n, dims.d_h));  // H at t=0 is zero
  std::vector<UnrollStep> steps;
  steps.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    Var x = tape.constant(panel.x[static_cast<std::size_t>(t)]);
    const Var* a = wiring.use_graph ? &ahat[graph.is_static ? 0 : t] : nullptr;
    Var z = encode_node(tape, h, x, a, pv);

    UnrollStep step;
    step.z = z;
    step.y1 = head_node(tape, z, ones_n1, pv.f1_w_hidden, pv.f1_b_hidden, pv.f1_w_out, pv.f1_b_out);
    step.y0 = head_node(tape, z, ones_n1, pv.f0_w_hidden, pv.f0_b_hidden, pv.f0_w_out, pv.f0_b_out);
    step.s = treatment_node(tape, z, ones_n1, pv);
    steps.push_back(step);

    Var c_t = tape.constant(column_as_matrix(panel.c, t));
    Var y_t = tape.constant(transform.apply_all(column_as_matrix(panel.y, t)));
    if (c_consts) c_consts->push_back(c_t);
    if (y_consts) y_consts->push_back(y_t);

    if (wiring.use_temporal && t + 1 < T) {
      Var input = tape.concat_cols(tape.concat_cols(z, x), tape.concat_cols(c_t, y_t));
      h = gru_node(tape, h, input, ones_n1, pv);
    }
  }
  return steps;
}

}  // namespace

// ---------------------------------------------------------------------------
// Plain-matrix wrappers.

Matrix encode_confounders(const Matrix& h_prev, const Matrix& x, const Matrix* ahat,
                          const ModelParams& params) {
  Tape tape;
  ParamVars pv = register_params(tape, params);
  Var h = tape.constant(h_prev);
  Var xv = tape.constant(x);
  Var a{nullptr, -1};
  if (ahat) a = tape.constant(*ahat);
  Var z = encode_node(tape, h, xv, ahat ? &a : nullptr, pv);
  return z.value();
}

Matrix update_memory(const Matrix& h_prev, const Matrix& z, const Matrix& x, const Matrix& c,
                     const Matrix& y_scaled, const ModelParams& params) {
  for (double v : c.values())
    if (v != 0.0 && v != 1.0)
      throw DataError("update_memory: treatment entries must be binary");
  Tape tape;
  ParamVars pv = register_params(tape, params);
  Var input = tape.constant(concat_cols(concat_cols(z, x), concat_cols(c, y_scaled)));
  Var ones_n1 = tape.constant(Matrix(h_prev.rows(), 1, 1.0));
  Var h = gru_node(tape, tape.constant(h_prev), input, ones_n1, pv);
  return h.value();
}

std::pair<Matrix, Matrix> predict_outcomes(const Matrix& z, const ModelParams& params) {
  Tape tape;
  ParamVars pv = register_params(tape, params);
  Var zv = tape.constant(z);
  Var ones_n1 = tape.constant(Matrix(z.rows(), 1, 1.0));
  Var y1 = head_node(tape, zv, ones_n1, pv.f1_w_hidden, pv.f1_b_hidden, pv.f1_w_out, pv.f1_b_out);
  Var y0 = head_node(tape, zv, ones_n1, pv.f0_w_hidden, pv.f0_b_hidden, pv.f0_w_out, pv.f0_b_out);
  return {y1.value(), y0.value()};
}

Matrix predict_treatment(const Matrix& z, const ModelParams& params) {
  Tape tape;
  ParamVars pv = register_params(tape, params);
  Var zv = tape.constant(z);
  Var ones_n1 = tape.constant(Matrix(z.rows(), 1, 1.0));
  return treatment_node(tape, zv, ones_n1, pv).value();
}

double factual_loss(const Matrix& y1_hat, const Matrix& y0_hat, const Matrix& c, const Matrix& y,
                    const std::vector<int>& mask) {
  if (mask.empty()) throw DataError("factual_loss: empty unit mask leaves the loss undefined");
  double sum = 0.0;
  for (int u : mask) {
    const double pred = c(u, 0) != 0.0 ? y1_hat(u, 0) : y0_hat(u, 0);
    const double r = pred - y(u, 0);
    sum += r * r;
  }
  return sum / static_cast<double>(mask.size());
}

double treatment_loss(const Matrix& s_hat, const Matrix& c, const std::vector<int>& mask) {
  if (mask.empty()) throw DataError("treatment_loss: empty unit mask");
  double sum = 0.0;
  for (int u : mask) {
    const double s = std::min(1.0 - kProbabilityClamp, std::max(kProbabilityClamp, s_hat(u, 0)));
    sum -= c(u, 0) != 0.0 ? std::log(s) : std::log(1.0 - s);
  }
  return sum / static_cast<double>(mask.size());
}

BalanceResult balancing_loss(const Matrix& z, const Matrix& c, const std::vector<int>& mask) {
  Tape tape;
  Var zv = tape.param("z", z);  // differentiable input
  GroupSplit groups = split_by_treatment(c, mask);
  BalanceResult result;
  Var loss = balancing_node(tape, zv, groups, &result.degenerate);
  result.value = loss.value()(0, 0);
  return result;
}

CompositeResult composite_loss(const TrainingPanel& panel, const TemporalGraph& graph,
                               const OutcomeTransform& transform, const ModelParams& params,
                               const LossWeights& weights, const std::vector<int>& mask,
                               const CompositeOptions& options) {
  if (mask.empty()) throw DataError("composite_loss: empty training mask");
  const int T = panel.T;

  Tape tape;
  ParamVars pv = register_params(tape, params);
  std::vector<Var> c_consts, y_consts;
  std::vector<UnrollStep> steps = unroll_model(tape, panel, graph, transform, pv, params.dims,
                                               options.wiring, &c_consts, &y_consts);

  const double inv_unit_periods = 1.0 / (static_cast<double>(T) * mask.size());
  Var ly_sum{&tape, -1}, lc_sum{&tape, -1}, lb_sum{&tape, -1};
  int degenerate_periods = 0;

  for (int t = 0; t < T; ++t) {
    const UnrollStep& step = steps[static_cast<std::size_t>(t)];
    Var c_t = c_consts[static_cast<std::size_t>(t)];
    Var y_t = y_consts[static_cast<std::size_t>(t)];
    Var ones = tape.constant(Matrix(panel.n, 1, 1.0));

    // factual MSE: the head indexed by the observed treatment
    Var selected = tape.mul(c_t, step.y1) + tape.mul(tape.sub(ones, c_t), step.y0);
    Var sq = tape.square(tape.sub(selected, y_t));
    Var ly_t = tape.reduce_sum(tape.gather_rows(sq, mask));
    ly_sum = t == 0 ? ly_t : ly_sum + ly_t;

    // treatment cross entropy on clamped probabilities
    Var s = tape.clamp(step.s, kProbabilityClamp, 1.0 - kProbabilityClamp);
    Var ce = tape.neg(tape.mul(c_t, tape.log(s)) +
                      tape.mul(tape.sub(ones, c_t), tape.log(tape.sub(ones, s))));
    Var lc_t = tape.reduce_sum(tape.gather_rows(ce, mask));
    lc_sum = t == 0 ? lc_t : lc_sum + lc_t;

    // representation balancing within the mask
    bool degenerate = false;
    GroupSplit groups = split_by_treatment(column_as_matrix(panel.c, t), mask);
    Var lb_t = balancing_node(tape, step.z, groups, &degenerate);
    if (degenerate) ++degenerate_periods;
    lb_sum = t == 0 ? lb_t : lb_sum + lb_t;
  }

  CompositeResult result;
  result.breakdown.l_y = ly_sum.value()(0, 0) * inv_unit_periods;
  result.breakdown.l_c = lc_sum.value()(0, 0) * inv_unit_periods;
  result.breakdown.l_b = lb_sum.value()(0, 0) / static_cast<double>(T);
  result.breakdown.l2 = params.squared_norm();
  result.breakdown.alpha = weights.alpha;
  result.breakdown.beta = weights.beta;
  result.breakdown.lambda = weights.lambda;
  result.breakdown.total = result.breakdown.l_y + weights.alpha * result.breakdown.l_c +
                           weights.beta * result.breakdown.l_b +
                           weights.lambda * result.breakdown.l2;
  result.breakdown.degenerate_balance_periods = degenerate_periods;

  if (options.with_grads) {
    Var loss = tape.mul_scalar(ly_sum, inv_unit_periods) +
               tape.mul_scalar(lc_sum, weights.alpha * inv_unit_periods) +
               tape.mul_scalar(lb_sum, weights.beta / static_cast<double>(T));
    tape.backward(loss);
    result.grads = tape.param_grads();
  }
  if (options.with_predictions) {
    result.predictions.reserve(static_cast<std::size_t>(T));
    for (const UnrollStep& step : steps)
      result.predictions.push_back(PeriodPredictions{step.z.value(), step.y1.value(),
                                                     step.y0.value(), step.s.value()});
  }
  return result;
}

std::vector<PeriodPredictions> forward_predictions(const TrainingPanel& panel,
                                                   const TemporalGraph& graph,
                                                   const OutcomeTransform& transform,
                                                   const ModelParams& params,
                                                   const ModelWiring& wiring) {
  Tape tape;
  ParamVars pv = register_params(tape, params);
  std::vector<UnrollStep> steps =
      unroll_model(tape, panel, graph, transform, pv, params.dims, wiring, nullptr, nullptr);
  std::vector<PeriodPredictions> out;
  out.reserve(steps.size());
  for (const UnrollStep& step : steps)
    out.push_back(
        PeriodPredictions{step.z.value(), step.y1.value(), step.y0.value(), step.s.value()});
  return out;
}

void add_l2_gradients(GradientSet& grads, const ModelParams& params, double lambda) {
  for (const auto& [name, m] : params.refs()) {
    auto it = grads.find(name);
    if (it == grads.end()) throw DataError("add_l2_gradients: missing gradient for '" + name + "'");
    double* pg = it->second.data();
    const double* pt = m->data();
    for (std::size_t i = 0; i < m->size(); ++i) pg[i] += 2.0 * lambda * pt[i];
  }
}

}  // namespace deconf

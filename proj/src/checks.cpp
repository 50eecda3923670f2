#include "cpfs3d/checks.hpp"

#include "cpfs3d/contrast.hpp"
#include "cpfs3d/detector.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace cpfs3d {

std::string format_check_line(const CheckResult& r) {
  std::ostringstream os;
  os << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << "  value=" << r.value
     << " limit=" << r.limit;
  if (!r.detail.empty()) os << "  (" << r.detail << ")";
  return os.str();
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

// ---- closed forms -----------------------------------------------------------

namespace {

double semantic_loss_value(const MatX<double>& grid, int B, int N, double tau) {
  Tape<double> tape;
  Var<double> g = leaf(tape, grid, false);
  return semantic_loss(g, B, N, tau).value()(0, 0);
}

double primitive_infonce_value(const MatX<double>& m_proj, const MatX<double>& g_hat,
                               double tau) {
  Tape<double> tape;
  Var<double> m = leaf(tape, m_proj, false);
  Var<double> g = leaf(tape, g_hat, false);
  return primitive_infonce(m, g, tau).value()(0, 0);
}

}  // namespace

std::vector<CheckResult> run_closed_form_checks() {
  std::vector<CheckResult> out;
  Rng rng(7);
  const double tau = 0.2;

  for (int N : {2, 4, 8}) {
    const int B = 2;
    MatX<double> row(1, 6);
    for (int j = 0; j < 6; ++j) row(0, j) = rng.normal();
    row /= row.norm();
    MatX<double> grid = row.replicate(B * N, 1);
    const double loss = semantic_loss_value(grid, B, N, tau);
    const double err = std::abs(loss - std::log(static_cast<double>(N)));
    out.push_back({"semcl_uniform_N" + std::to_string(N), err < 1e-6, err, 1e-6, ""});
  }

  for (int Wp : {2, 16, 128}) {
    MatX<double> row(1, 6);
    for (int j = 0; j < 6; ++j) row(0, j) = rng.normal();
    row /= row.norm();
    MatX<double> m = row.replicate(Wp, 1);
    const double loss = primitive_infonce_value(m, m, tau);
    const double err = std::abs(loss - std::log(static_cast<double>(Wp)));
    out.push_back({"primcl_uniform_W" + std::to_string(Wp), err < 1e-6, err, 1e-6, ""});
  }

  // Orthonormal two-episode two-class grid: the positive similarity is 1,
  // all negatives 0, so every row contributes ln(1 + e^{-1/tau}).
  {
    MatX<double> grid = MatX<double>::Zero(4, 4);
    grid(0, 0) = 1;  // episode 0, class 0
    grid(1, 1) = 1;  // episode 0, class 1
    grid(2, 0) = 1;  // episode 1, class 0
    grid(3, 1) = 1;  // episode 1, class 1
    const double expect = std::log(1.0 + std::exp(-1.0 / tau));
    const double loss = semantic_loss_value(grid, 2, 2, tau);
    const double err = std::abs(loss - expect);
    out.push_back({"semcl_orthonormal_B2N2", err < 1e-6, err, 1e-6,
                   "expect ln(1+e^-5)"});
  }
  {
    MatX<double> eye = MatX<double>::Identity(2, 2);
    const double expect = std::log(1.0 + std::exp(-1.0 / tau));
    const double loss = primitive_infonce_value(eye, eye, tau);
    const double err = std::abs(loss - expect);
    out.push_back({"primcl_orthonormal_W2", err < 1e-6, err, 1e-6,
                   "expect ln(1+e^-5)"});
  }
  return out;
}

// ---- finite differences -----------------------------------------------------

namespace {

using BuildFn = std::function<Var<double>(ParamTape<double>&, Var<double>)>;

double eval_loss(const ParamStore& store, const MatX<double>& input, const BuildFn& build,
                 MatX<double>* d_input, std::map<std::string, MatX<double>>* d_params) {
  Tape<double> tape;
  ParamStore copy = store;
  ParamTape<double> pt(tape, copy, d_input != nullptr);
  Var<double> x = leaf(tape, input, d_input != nullptr);
  Var<double> loss = build(pt, x);
  if (d_input) {
    tape.backward(loss.id);
    *d_input = tape.grad_or_zero(x.id);
    for (const auto& [name, var] : pt.vars) (*d_params)[name] = tape.grad_or_zero(var.id);
  }
  return loss.value()(0, 0);
}

// Max relative FD error over a random subset of input and parameter
// coordinates. Parameters are float-stored, so the measured (applied)
// perturbation is used as the denominator rather than the nominal 2h.
double fd_max_rel_err(const ParamStore& store, const MatX<double>& input,
                      const BuildFn& build, Rng& rng, int n_coords, double h = 1e-5) {
  MatX<double> d_input;
  std::map<std::string, MatX<double>> d_params;
  eval_loss(store, input, build, &d_input, &d_params);

  struct Coord {
    std::string name;  // empty = the input leaf
    int i = 0, j = 0;
    double analytic = 0;
  };
  std::vector<Coord> coords;
  for (int i = 0; i < input.rows(); ++i)
    for (int j = 0; j < input.cols(); ++j)
      coords.push_back({"", i, j, d_input(i, j)});
  for (const auto& [name, g] : d_params)
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) coords.push_back({name, i, j, g(i, j)});

  std::vector<int> picks =
      rng.sample_without_replacement(static_cast<int>(coords.size()),
                                     std::min<int>(n_coords, static_cast<int>(coords.size())));
  double worst = 0.0;
  for (int pick : picks) {
    const Coord& c = coords[static_cast<size_t>(pick)];
    double lp, lm, delta;
    if (c.name.empty()) {
      MatX<double> xp = input, xm = input;
      xp(c.i, c.j) += h;
      xm(c.i, c.j) -= h;
      delta = xp(c.i, c.j) - xm(c.i, c.j);
      lp = eval_loss(store, xp, build, nullptr, nullptr);
      lm = eval_loss(store, xm, build, nullptr, nullptr);
    } else {
      ParamStore sp = store, sm = store;
      const double v = static_cast<double>(store.at(c.name)(c.i, c.j));
      sp.at(c.name)(c.i, c.j) = static_cast<float>(v + h);
      sm.at(c.name)(c.i, c.j) = static_cast<float>(v - h);
      delta = static_cast<double>(sp.at(c.name)(c.i, c.j)) -
              static_cast<double>(sm.at(c.name)(c.i, c.j));
      lp = eval_loss(sp, input, build, nullptr, nullptr);
      lm = eval_loss(sm, input, build, nullptr, nullptr);
    }
    const double fd = (lp - lm) / delta;
    const double rel = std::abs(fd - c.analytic) /
                       std::max({std::abs(fd), std::abs(c.analytic), 1e-4});
    worst = std::max(worst, rel);
  }
  return worst;
}

MatX<double> random_mat(Rng& rng, int r, int c, double s = 0.7) {
  MatX<double> m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = s * rng.normal();
  return m;
}

double grad_check_semantic(Rng& rng, int instances) {
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const int B = 2 + rng.uniform_int(2);
    const int N = 2 + rng.uniform_int(2);
    const int K = 1 + rng.uniform_int(2);
    const int d = 8;
    ContrastConfig cc;
    cc.normalize_sim = (t % 2 == 0);
    ParamStore store;
    init_projections(store, d, rng, cc);
    MatX<double> x = random_mat(rng, B * N * K, d);
    const double tau = 0.2;
    BuildFn build = [=](ParamTape<double>& pt, Var<double> xin) {
      Var<double> grid = build_semantic_grid(pt, xin, B, N, K, cc);
      return semantic_loss(grid, B, N, tau);
    };
    worst = std::max(worst, fd_max_rel_err(store, x, build, rng, 8));
  }
  return worst;
}

double grad_check_primitive(Rng& rng, int instances) {
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const int d = 8;
    const int W = 3 + rng.uniform_int(2);
    const int m = 8 + rng.uniform_int(6);
    ContrastConfig cc;
    cc.pcl_denominator = (t % 2 == 0) ? "mean" : "proto";

    PrototypeBank bank;
    bank.g = random_mat(rng, W, d).cast<float>();
    for (int w = 0; w < W; ++w) bank.g.row(w).normalize();
    bank.usage_count.assign(static_cast<size_t>(W), 0);

    AssignmentResult assignment;
    assignment.labels.assign(static_cast<size_t>(m), -1);
    assignment.groups.assign(static_cast<size_t>(W), {});
    for (int i = 0; i < m; ++i) {
      const int w = rng.uniform_int(W + 1) - 1;  // -1 = background
      assignment.labels[static_cast<size_t>(i)] = w;
      if (w >= 0) assignment.groups[static_cast<size_t>(w)].push_back(i);
    }
    // Force at least two non-empty groups so the loss is active.
    if (assignment.groups[0].empty()) {
      assignment.groups[0].push_back(0);
      assignment.labels[0] = 0;
    }
    if (assignment.groups[1].empty()) {
      assignment.groups[1].push_back(1);
      assignment.labels[1] = 1;
    }
    for (int w = 0; w < W; ++w)
      if (!assignment.groups[static_cast<size_t>(w)].empty())
        assignment.nonempty.push_back(w);

    ParamStore store;
    init_projections(store, d, rng, cc);
    MatX<double> x = random_mat(rng, m, d);
    const double tau = 0.2;
    BuildFn build = [=](ParamTape<double>& pt, Var<double> xin) {
      return primitive_loss(pt, xin, assignment, bank, cc, tau);
    };
    worst = std::max(worst, fd_max_rel_err(store, x, build, rng, 8));
  }
  return worst;
}

double grad_check_detection(Rng& rng, int instances) {
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const int d = 8;
    const int M = 12;
    DetectorConfig dc;
    dc.proposals = 4;
    dc.cluster_nsample = 4;
    dc.cluster_radius = 0.6f;
    dc.head_hidden = 8;
    dc.num_classes = 3;
    dc.cls_head = (t % 2 == 0) ? "affine" : "metric";

    Mat3X positions(M, 3);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < 3; ++j) positions(i, j) = static_cast<float>(rng.uniform(-1, 1));

    std::vector<Box3D> gt;
    for (int g = 0; g < 2; ++g) {
      Box3D b;
      const int anchor = rng.uniform_int(M);
      b.center = positions.row(anchor).transpose() +
                 Vec3f(static_cast<float>(rng.uniform(-0.05, 0.05)),
                       static_cast<float>(rng.uniform(-0.05, 0.05)),
                       static_cast<float>(rng.uniform(-0.05, 0.05)));
      b.size = Vec3f(static_cast<float>(rng.uniform(0.4, 0.9)),
                     static_cast<float>(rng.uniform(0.4, 0.9)),
                     static_cast<float>(rng.uniform(0.4, 0.9)));
      b.class_id = rng.uniform_int(dc.num_classes);
      b.instance_id = g;
      gt.push_back(b);
    }
    const Vec3f prior = Vec3f::Constant(0.6f);

    ParamStore store;
    init_detector(store, d, dc, rng);
    MatX<double> x = random_mat(rng, M, d);
    const int N_proto = 3;
    MatX<double> protos = random_mat(rng, N_proto, d);
    std::vector<int> active = {0, 1, 2};

    std::vector<char> fg(static_cast<size_t>(M), 0);
    for (int i = 0; i < M; ++i) {
      const Vec3f p = positions.row(i).transpose();
      for (const auto& b : gt)
        if (b.contains(p)) {
          fg[static_cast<size_t>(i)] = 1;
          break;
        }
    }

    // Freeze the discrete cluster structure at the unperturbed point.
    std::vector<std::vector<int>> groups;
    Mat3X centers;
    {
      Tape<double> t0;
      ParamStore s0 = store;
      ParamTape<double> pt0(t0, s0, false);
      SeedFeatureSet<double> seeds0;
      seeds0.features = leaf(t0, x, false);
      seeds0.positions = positions;
      seeds0.foreground = fg;
      seeds0.primitive_label.assign(static_cast<size_t>(M), -1);
      VoteSet<double> v0 = vote(pt0, seeds0, dc);
      ProposalSet<double> p0 = cluster(v0, dc);
      groups = p0.groups;
      centers = p0.centers;
    }

    BuildFn build = [=](ParamTape<double>& pt, Var<double> xin) {
      SeedFeatureSet<double> seeds;
      seeds.features = xin;
      seeds.positions = positions;
      seeds.foreground = fg;
      seeds.primitive_label.assign(static_cast<size_t>(M), -1);
      VoteSet<double> votes = vote(pt, seeds, dc);
      ProposalSet<double> props = cluster(votes, dc, &groups, &centers);
      Var<double> proto_leaf = leaf(*pt.tape, protos, false);
      props = refine_proposals(pt, props, proto_leaf);
      Prediction<double> pred = predict(pt, props, proto_leaf, active, prior, dc);
      DetLossParts<double> parts = detection_loss(pred, votes, seeds, gt, prior, dc);
      return parts.det;
    };
    worst = std::max(worst, fd_max_rel_err(store, x, build, rng, 8));
  }
  return worst;
}

}  // namespace

std::vector<CheckResult> run_grad_checks(uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);

  {
    Rng r = rng.fork(1);
    const double err = grad_check_semantic(r, 20);
    out.push_back({"fd_semantic_loss", err < 1e-4, err, 1e-4, "20 instances, h=1e-5"});
  }
  {
    Rng r = rng.fork(2);
    const double err = grad_check_primitive(r, 20);
    out.push_back({"fd_primitive_loss", err < 1e-4, err, 1e-4, "20 instances, h=1e-5"});
  }
  {
    Rng r = rng.fork(3);
    const double err = grad_check_detection(r, 20);
    out.push_back({"fd_detection_loss", err < 1e-4, err, 1e-4, "20 instances, h=1e-5"});
  }

  // Detach: a backward pass through the primitive loss must leave the bank
  // leaf without any accumulated gradient even when it asks for one.
  {
    Rng r = rng.fork(4);
    const int d = 8, W = 4;
    ContrastConfig cc;
    ParamStore store;
    init_projections(store, d, r, cc);
    Tape<double> tape;
    ParamTape<double> pt(tape, store, true);
    MatX<double> bank_rows = random_mat(r, W, d);
    Var<double> bank_leaf = leaf(tape, bank_rows, true);
    Var<double> g_hat = stop_grad(
        l2_normalize_rows(apply_projection(pt, cc.proj_p(), bank_leaf)));
    Var<double> m_proj = l2_normalize_rows(
        apply_projection(pt, cc.proj_p(), leaf(tape, random_mat(r, W, d), true)));
    Var<double> loss = primitive_infonce(m_proj, g_hat, 0.2);
    tape.backward(loss.id);
    const double gnorm =
        tape.has_grad(bank_leaf.id) ? tape.grad(bank_leaf.id).norm() : 0.0;
    out.push_back({"bank_detach_zero_grad", gnorm == 0.0, gnorm, 0.0, ""});
  }

  // Momentum update against a direct evaluation of the rule.
  {
    Rng r = rng.fork(5);
    const int d = 8, W = 5;
    MatX<float> means = random_mat(r, W, d).cast<float>();
    auto fresh = [&](float gamma) {
      PrototypeBank bank;
      bank.g = random_mat(r, W, d).cast<float>();
      bank.gamma = gamma;
      bank.usage_count.assign(static_cast<size_t>(W), 0);
      return bank;
    };
    AssignmentResult assignment;
    assignment.groups.assign(static_cast<size_t>(W), {});
    assignment.means = means;
    assignment.nonempty = {0, 2, 4};
    for (int w : assignment.nonempty) assignment.groups[static_cast<size_t>(w)] = {0};

    PrototypeBank bank = fresh(0.999f);
    MatX<float> expect = bank.g;
    for (int w : assignment.nonempty)
      expect.row(w) = 0.999f * bank.g.row(w) + (1.0f - 0.999f) * means.row(w);
    momentum_update(bank, assignment, /*renormalize=*/false);
    const double err = static_cast<double>((bank.g - expect).cwiseAbs().maxCoeff());
    out.push_back({"momentum_matches_rule", err <= 1e-12, err, 1e-12, "gamma=0.999"});

    PrototypeBank fix = fresh(1.0f);
    MatX<float> before = fix.g;
    momentum_update(fix, assignment, false);
    const double fix_err = static_cast<double>((fix.g - before).cwiseAbs().maxCoeff());
    out.push_back({"momentum_gamma1_fixpoint", fix_err == 0.0, fix_err, 0.0, ""});

    PrototypeBank copy = fresh(0.0f);
    momentum_update(copy, assignment, false);
    double copy_err = 0.0;
    for (int w : assignment.nonempty)
      copy_err = std::max(copy_err,
                          static_cast<double>(
                              (copy.g.row(w) - means.row(w)).cwiseAbs().maxCoeff()));
    out.push_back({"momentum_gamma0_copies", copy_err == 0.0, copy_err, 0.0, ""});
  }

  // Weighting both contrastive terms by zero must leave the projection
  // heads with exactly zero gradient.
  {
    Rng r = rng.fork(6);
    const int d = 8, B = 2, N = 2, K = 1;
    ContrastConfig cc;
    ParamStore store;
    init_projections(store, d, r, cc);
    Tape<double> tape;
    ParamTape<double> pt(tape, store, true);
    Var<double> x = leaf(tape, random_mat(r, B * N * K, d), true);
    Var<double> grid = build_semantic_grid(pt, x, B, N, K, cc);
    Var<double> l_semcl = semantic_loss(grid, B, N, 0.2);
    Var<double> l_det = mean_all(square(x));
    Var<double> total = total_loss(l_det, l_semcl, l_semcl, 0.0, 0.0);
    tape.backward(total.id);
    double gmax = 0.0;
    for (const auto& [name, var] : pt.vars)
      if (name.rfind("proj_", 0) == 0)
        gmax = std::max(gmax, tape.grad_or_zero(var.id).cwiseAbs().maxCoeff());
    out.push_back({"lambda_zero_projection_grads", gmax == 0.0, gmax, 0.0, ""});
  }

  return out;
}

// ---- oracles ----------------------------------------------------------------

double oracle_iou3d(const Box3D& a, const Box3D& b) {
  double lo[3], hi[3], lo2[3], hi2[3];
  for (int k = 0; k < 3; ++k) {
    lo[k] = static_cast<double>(a.center(k)) - static_cast<double>(a.size(k)) / 2.0;
    hi[k] = static_cast<double>(a.center(k)) + static_cast<double>(a.size(k)) / 2.0;
    lo2[k] = static_cast<double>(b.center(k)) - static_cast<double>(b.size(k)) / 2.0;
    hi2[k] = static_cast<double>(b.center(k)) + static_cast<double>(b.size(k)) / 2.0;
  }
  double inter = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double left = std::max(lo[k], lo2[k]);
    const double right = std::min(hi[k], hi2[k]);
    if (right <= left) return 0.0;
    inter *= right - left;
  }
  double va = 1.0, vb = 1.0;
  for (int k = 0; k < 3; ++k) {
    va *= hi[k] - lo[k];
    vb *= hi2[k] - lo2[k];
  }
  const double uni = va + vb - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double oracle_average_precision(const std::vector<RankedDet>& dets,
                                const std::vector<std::pair<int, Box3D>>& gts,
                                double iou_threshold) {
  if (gts.empty()) return 0.0;
  // Rank score-descending, ties keeping input order.
  std::vector<int> order(dets.size());
  for (size_t i = 0; i < dets.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return dets[static_cast<size_t>(x)].score > dets[static_cast<size_t>(y)].score;
  });

  std::vector<char> used(gts.size(), 0);
  std::vector<char> tp(order.size(), 0);
  for (size_t r = 0; r < order.size(); ++r) {
    const RankedDet& det = dets[static_cast<size_t>(order[r])];
    double best_iou = 0.0;
    int best_g = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].first != det.scene) continue;
      const double iou = oracle_iou3d(det.box, gts[g].second);
      if (iou > best_iou) {
        best_iou = iou;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0 && best_iou >= iou_threshold) {
      tp[r] = 1;
      used[static_cast<size_t>(best_g)] = 1;
    }
  }

  const double total = static_cast<double>(gts.size());
  std::vector<double> recalls(order.size()), precisions(order.size());
  int tp_count = 0;
  for (size_t r = 0; r < order.size(); ++r) {
    if (tp[r]) ++tp_count;
    recalls[r] = tp_count / total;
    precisions[r] = static_cast<double>(tp_count) / static_cast<double>(r + 1);
  }

  // Quadratic all-point interpolation: integrate max precision at or beyond
  // each recall step.
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t r = 0; r < order.size(); ++r) {
    if (!tp[r]) continue;
    double p_interp = 0.0;
    for (size_t j = 0; j < order.size(); ++j)
      if (recalls[j] >= recalls[r]) p_interp = std::max(p_interp, precisions[j]);
    ap += (recalls[r] - prev_recall) * p_interp;
    prev_recall = recalls[r];
  }
  return ap;
}

std::vector<int> oracle_assign_labels(const MatX<float>& features,
                                      const std::vector<char>& foreground,
                                      const MatX<float>& bank_rows) {
  const int m = static_cast<int>(features.rows());
  const int W = static_cast<int>(bank_rows.rows());
  std::vector<int> labels(static_cast<size_t>(m), -1);
  for (int i = 0; i < m; ++i) {
    if (!foreground[static_cast<size_t>(i)]) continue;
    const float fn = features.row(i).norm();
    int best = 0;
    if (fn != 0.0f) {
      float best_sim = -std::numeric_limits<float>::max();
      for (int w = 0; w < W; ++w) {
        const float bn = bank_rows.row(w).norm();
        const float denom = fn * bn;
        const float sim = denom > 0.0f ? features.row(i).dot(bank_rows.row(w)) / denom : 0.0f;
        if (sim > best_sim) {
          best_sim = sim;
          best = w;
        }
      }
    }
    labels[static_cast<size_t>(i)] = best;
  }
  return labels;
}

namespace {

Box3D random_box(Rng& rng, double span) {
  Box3D b;
  for (int k = 0; k < 3; ++k) {
    b.center(k) = static_cast<float>(rng.uniform(-span, span));
    b.size(k) = static_cast<float>(rng.uniform(0.1, 1.5));
  }
  return b;
}

}  // namespace

std::vector<CheckResult> run_oracle_checks(uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);

  {
    Rng r = rng.fork(11);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      Box3D a = random_box(r, 1.0);
      Box3D b = random_box(r, 1.0);
      if (t % 2 == 0) {
        // Bias half the cases toward overlap.
        b.center = a.center + Vec3f(static_cast<float>(r.uniform(-0.3, 0.3)),
                                    static_cast<float>(r.uniform(-0.3, 0.3)),
                                    static_cast<float>(r.uniform(-0.3, 0.3)));
      }
      if (t % 10 == 9) {
        // Exactly touching faces: intersection must be zero, not negative.
        b.center.x() = a.center.x() + (a.size.x() + b.size.x()) / 2.0f;
        b.center.y() = a.center.y();
        b.center.z() = a.center.z();
      }
      worst = std::max(worst, std::abs(iou3d(a, b) - oracle_iou3d(a, b)));
    }
    out.push_back({"iou3d_vs_bruteforce", worst <= 1e-9, worst, 1e-9, "200 instances"});
  }

  {
    Rng r = rng.fork(12);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      const int scenes = 1 + r.uniform_int(3);
      std::vector<std::pair<int, Box3D>> gts;
      const int n_gt = 1 + r.uniform_int(6);
      for (int g = 0; g < n_gt; ++g)
        gts.emplace_back(r.uniform_int(scenes), random_box(r, 1.0));
      std::vector<RankedDet> dets;
      const int n_det = r.uniform_int(9);
      for (int dd = 0; dd < n_det; ++dd) {
        RankedDet det;
        det.scene = r.uniform_int(scenes);
        // Quantized scores in half the cases exercise tie handling.
        double s = r.uniform();
        if (t % 2 == 1) s = std::floor(s * 10.0) / 10.0;
        det.score = s;
        if (dd % 3 != 0 && !gts.empty()) {
          const auto& base = gts[static_cast<size_t>(r.uniform_int(n_gt))];
          det.scene = base.first;
          det.box = base.second;
          det.box.center += Vec3f(static_cast<float>(r.uniform(-0.2, 0.2)),
                                  static_cast<float>(r.uniform(-0.2, 0.2)),
                                  static_cast<float>(r.uniform(-0.2, 0.2)));
        } else {
          det.box = random_box(r, 1.0);
        }
        dets.push_back(det);
      }
      const double thr = (t % 2 == 0) ? 0.25 : 0.5;
      worst = std::max(worst, std::abs(average_precision(dets, gts, thr) -
                                       oracle_average_precision(dets, gts, thr)));
    }
    out.push_back({"ap_vs_bruteforce", worst <= 1e-9, worst, 1e-9, "200 instances"});
  }

  {
    Rng r = rng.fork(13);
    int mismatches = 0;
    for (int t = 0; t < 50; ++t) {
      const int m = 5 + r.uniform_int(16);
      const int W = 3 + r.uniform_int(4);
      const int d = 8;
      MatX<float> features(m, d);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) features(i, j) = static_cast<float>(r.normal());
      std::vector<char> fg(static_cast<size_t>(m));
      for (int i = 0; i < m; ++i) fg[static_cast<size_t>(i)] = r.uniform() < 0.7 ? 1 : 0;
      if (t % 5 == 0 && m > 0) {
        features.row(0).setZero();  // zero-norm feature path
        fg[0] = 1;
      }
      PrototypeBank bank;
      bank.g.resize(W, d);
      for (int w = 0; w < W; ++w) {
        for (int j = 0; j < d; ++j) bank.g(w, j) = static_cast<float>(r.normal());
        bank.g.row(w).normalize();
      }
      bank.usage_count.assign(static_cast<size_t>(W), 0);
      AssignmentResult res = assign(features, fg, bank, nullptr);
      const std::vector<int> expect = oracle_assign_labels(features, fg, bank.g);
      if (res.labels != expect) ++mismatches;
    }
    out.push_back({"assign_vs_exhaustive", mismatches == 0,
                   static_cast<double>(mismatches), 0.0, "50 instances"});
  }

  {
    // Dense single-head attention recomputed without the tape.
    Rng r = rng.fork(14);
    const int d = 8, M = 4, W = 3;
    ParamStore store;
    init_attention(store, "refine_seed", d, r);
    MatX<double> q_in = random_mat(r, M, d);
    MatX<double> kv = random_mat(r, W, d);

    Tape<double> tape;
    ParamTape<double> pt(tape, store, false);
    Var<double> got = cross_attention(pt, "refine_seed", leaf(tape, q_in, false),
                                      leaf(tape, kv, false));

    auto affine = [&](const MatX<double>& x, const std::string& p) {
      MatX<double> w = store.at(p + ".w").cast<double>();
      MatX<double> b = store.at(p + ".b").cast<double>();
      return (x * w).rowwise() + b.row(0);
    };
    MatX<double> Q = affine(q_in, "refine_seed.q");
    MatX<double> Kk = affine(kv, "refine_seed.k");
    MatX<double> V = affine(kv, "refine_seed.v");
    MatX<double> scores = Q * Kk.transpose() / std::sqrt(static_cast<double>(d));
    MatX<double> attn(M, W);
    for (int i = 0; i < M; ++i) {
      const double mx = scores.row(i).maxCoeff();
      double z = 0.0;
      for (int j = 0; j < W; ++j) z += std::exp(scores(i, j) - mx);
      for (int j = 0; j < W; ++j) attn(i, j) = std::exp(scores(i, j) - mx) / z;
    }
    MatX<double> expect = q_in + attn * V;
    const double err = (got.value() - expect).cwiseAbs().maxCoeff();
    out.push_back({"attention_vs_dense", err < 1e-6, err, 1e-6, ""});
  }

  return out;
}

}  // namespace cpfs3d

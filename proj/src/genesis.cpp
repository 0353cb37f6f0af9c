// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "imc/genesis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "imc/error.hpp"

namespace imc {

SparseMatrix prune(const FixedTensor& w, double threshold) {
  if (!(threshold >= 0.0)) throw ContractViolation(fmt::format("prune threshold must be >= 0, got {}", threshold));
  if (w.shape.size() != 2) throw ContractViolation("prune expects a 2-D tensor");
  SparseMatrix s;
  s.rows = w.shape[0];
  s.cols = w.shape[1];
  s.scale = w.scale;
  s.offsets.push_back(0);
  for (int r = 0; r < s.rows; ++r) {
    for (int c = 0; c < s.cols; ++c) {
      const q15 v = w.data[static_cast<std::size_t>(r) * s.cols + c];
      if (v == 0 || std::abs(dequantize(v, w.scale)) < threshold) continue;
      if (s.values.size() >= 0xFFFF) throw ValidationError("pruned matrix exceeds 65535 nonzeros");
      s.columns.push_back(static_cast<std::uint16_t>(c));
      s.values.push_back(v);
    }
    s.offsets.push_back(static_cast<std::uint16_t>(s.values.size()));
  }
  return s;
}

LowRank svd_separate(const Eigen::MatrixXd& w, int k) {
  const auto lim = std::min(w.rows(), w.cols());
  if (k < 1 || k > lim) throw ContractViolation(fmt::format("rank {} outside [1, {}]", k, lim));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd root = svd.singularValues().head(k).cwiseSqrt();
  LowRank r;
  r.a = svd.matrixU().leftCols(k) * root.asDiagonal();
  r.b = root.asDiagonal() * svd.matrixV().leftCols(k).transpose();
  r.singular_values = svd.singularValues();
  r.error = (w - r.a * r.b).norm();
  return r;
}

// --- Tucker ------------------------------------------------------------------

Tensor3::Tensor3(std::array<int, 3> d) : dims(d), v(static_cast<std::size_t>(d[0]) * d[1] * d[2], 0.0) {}

double Tensor3::norm() const {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

namespace {

// t x_mode m: the mode dimension becomes m.rows().
Tensor3 ttm(const Tensor3& t, const Eigen::MatrixXd& m, int mode) {
  auto d = t.dims;
  d[mode] = static_cast<int>(m.rows());
  Tensor3 out(d);
  for (int i = 0; i < t.dims[0]; ++i) {
    for (int j = 0; j < t.dims[1]; ++j) {
      for (int k = 0; k < t.dims[2]; ++k) {
        const double x = t(i, j, k);
        if (x == 0.0) continue;
        const int idx[3] = {i, j, k};
        for (int r = 0; r < d[mode]; ++r) {
          int o[3] = {idx[0], idx[1], idx[2]};
          o[mode] = r;
          out(o[0], o[1], o[2]) += m(r, idx[mode]) * x;
        }
      }
    }
  }
  return out;
}

Eigen::MatrixXd unfold(const Tensor3& t, int mode) {
  const int a = (mode + 1) % 3, b = (mode + 2) % 3;
  Eigen::MatrixXd m(t.dims[mode], t.dims[a] * t.dims[b]);
  for (int i = 0; i < t.dims[0]; ++i) {
    for (int j = 0; j < t.dims[1]; ++j) {
      for (int k = 0; k < t.dims[2]; ++k) {
        const int idx[3] = {i, j, k};
        m(idx[mode], idx[a] * t.dims[b] + idx[b]) = t(i, j, k);
      }
    }
  }
  return m;
}

Eigen::MatrixXd leading(const Eigen::MatrixXd& m, int r) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(m.rows(), r);
  const auto avail = std::min<Eigen::Index>(r, svd.matrixU().cols());
  u.leftCols(avail) = svd.matrixU().leftCols(avail);
  return u;
}

Tensor3 project_except(const Tensor3& t, const std::array<Eigen::MatrixXd, 3>& u, int skip) {
  Tensor3 y = t;
  for (int n = 0; n < 3; ++n) {
    if (n != skip) y = ttm(y, u[n].transpose(), n);
  }
  return y;
}

double fit_of(double norm_t, const Tensor3& core) {
  if (norm_t == 0.0) return 1.0;
  const double g = core.norm();
  return 1.0 - std::sqrt(std::max(0.0, norm_t * norm_t - g * g)) / norm_t;
}

}  // namespace

Tensor3 Tucker::reconstruct() const {
  Tensor3 t = core;
  for (int n = 0; n < 3; ++n) t = ttm(t, factors[n], n);
  return t;
}

Tucker hooi(const Tensor3& t, std::array<int, 3> ranks, double tolerance, int max_iterations) {
  for (int n = 0; n < 3; ++n) {
    const long others = static_cast<long>(ranks[(n + 1) % 3]) * ranks[(n + 2) % 3];
    if (ranks[n] < 1 || ranks[n] > t.dims[n] || ranks[n] > others) {
      throw ContractViolation(fmt::format("Tucker ranks ({}, {}, {}) invalid for a {}x{}x{} tensor", ranks[0],
                                          ranks[1], ranks[2], t.dims[0], t.dims[1], t.dims[2]));
    }
  }
  if (max_iterations < 1) throw ContractViolation("HOOI needs at least one iteration");
  const double norm_t = t.norm();

  Tucker cur;
  for (int n = 0; n < 3; ++n) cur.factors[n] = leading(unfold(t, n), ranks[n]);
  cur.core = project_except(t, cur.factors, -1);
  cur.fit = fit_of(norm_t, cur.core);
  Tucker best = cur;

  for (int it = 1; it <= max_iterations; ++it) {
    const double prev = cur.fit;
    for (int n = 0; n < 3; ++n) {
      cur.factors[n] = leading(unfold(project_except(t, cur.factors, n), n), ranks[n]);
    }
    cur.core = project_except(t, cur.factors, -1);
    cur.fit = fit_of(norm_t, cur.core);
    cur.iterations = it;
    if (cur.fit >= best.fit) best = cur;
    if (std::abs(cur.fit - prev) < tolerance) {
      best.iterations = it;
      best.converged = true;
      return best;
    }
  }
  best.iterations = max_iterations;
  best.converged = false;
  return best;
}

// --- layer compression -------------------------------------------------------

namespace {

const FloatStage& single_stage(const FloatLayer& l) {
  if (l.stages.size() != 1) throw ValidationError(fmt::format("layer '{}': expected one stage", l.name));
  return l.stages[0];
}

void zero_small(FloatStage& st, double threshold) {
  for (auto& w : st.weights) {
    if (std::abs(w) < threshold) w = 0.0;
  }
}

}  // namespace

FloatLayer separate_fc(const FloatLayer& layer, int k) {
  const FloatStage& st = single_stage(layer);
  if (st.kind != StageKind::kDense || st.shape.size() != 2) {
    throw ValidationError(fmt::format("layer '{}': SVD separation needs a dense FC layer", layer.name));
  }
  const int m = st.shape[0], n = st.shape[1];
  Eigen::MatrixXd w(m, n);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) w(r, c) = st.weights[static_cast<std::size_t>(r) * n + c];
  }
  const LowRank lr = svd_separate(w, k);
  FloatStage first{StageKind::kDense, {k, n}, {}, {}, false};
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < n; ++c) first.weights.push_back(lr.b(r, c));
  }
  FloatStage second{StageKind::kDense, {m, k}, {}, st.bias, st.relu};
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < k; ++c) second.weights.push_back(lr.a(r, c));
  }
  return FloatLayer{layer.name, LayerKind::kFcSeparatedPair, {std::move(first), std::move(second)}};
}

FloatLayer separate_conv(const FloatLayer& layer, int rank, Tucker* info) {
  const FloatStage& st = single_stage(layer);
  if (st.kind != StageKind::kConv || st.shape.size() != 4) {
    throw ValidationError(fmt::format("layer '{}': Tucker separation needs a conv layer", layer.name));
  }
  const int co = st.shape[0], kh = st.shape[2], kw = st.shape[3];
  if (st.shape[1] != 1) {
    throw ValidationError(fmt::format("layer '{}': separation supports single-channel input only", layer.name));
  }
  if (rank < 1) throw ContractViolation("separation rank must be positive");
  const int r2 = std::min(kh, rank), r3 = std::min(kw, rank);
  const int r1 = std::min(co, r2 * r3);
  Tensor3 k3({co, kh, kw});
  k3.v = st.weights;
  const Tucker tk = hooi(k3, {r1, r2, r3});
  if (info) *info = tk;

  FloatStage a{StageKind::kConv, {r2, 1, kh, 1}, std::vector<double>(static_cast<std::size_t>(r2) * kh), {}, false};
  for (int c = 0; c < r2; ++c) {
    for (int y = 0; y < kh; ++y) a.weights[static_cast<std::size_t>(c) * kh + y] = tk.factors[1](y, c);
  }
  const int mid = r2 * r3;
  FloatStage b{StageKind::kConv, {mid, r2, 1, kw}, std::vector<double>(static_cast<std::size_t>(mid) * r2 * kw), {},
               false};
  for (int c2 = 0; c2 < r2; ++c2) {
    for (int c3 = 0; c3 < r3; ++c3) {
      const std::size_t o = static_cast<std::size_t>(c2) * r3 + c3;
      for (int x = 0; x < kw; ++x) b.weights[(o * r2 + c2) * kw + x] = tk.factors[2](x, c3);
    }
  }
  FloatStage c{StageKind::kConv, {co, mid, 1, 1}, std::vector<double>(static_cast<std::size_t>(co) * mid), st.bias,
               st.relu};
  for (int o = 0; o < co; ++o) {
    for (int c2 = 0; c2 < r2; ++c2) {
      for (int c3 = 0; c3 < r3; ++c3) {
        double s = 0.0;
        for (int c1 = 0; c1 < r1; ++c1) s += tk.factors[0](o, c1) * tk.core(c1, c2, c3);
        c.weights[static_cast<std::size_t>(o) * mid + c2 * r3 + c3] = s;
      }
    }
  }
  return FloatLayer{layer.name, LayerKind::kConvSeparatedTriple, {std::move(a), std::move(b), std::move(c)}};
}

FloatLayer compress_layer(const FloatLayer& layer, const LayerOption& opt) {
  if (!(opt.prune >= 0.0) || opt.rank < 0) {
    throw ValidationError(fmt::format("layer '{}': prune must be >= 0 and rank >= 0", layer.name));
  }
  if (opt.prune == 0.0 && opt.rank == 0) return layer;
  switch (layer.kind) {
    case LayerKind::kConv2d: {
      FloatLayer out = opt.rank > 0 ? separate_conv(layer, opt.rank) : layer;
      for (auto& st : out.stages) zero_small(st, opt.prune);
      return out;
    }
    case LayerKind::kFcDense: {
      if (opt.rank > 0 && opt.prune > 0.0) {
        throw ValidationError(fmt::format("layer '{}': an FC layer is either separated or pruned", layer.name));
      }
      if (opt.rank > 0) return separate_fc(layer, opt.rank);
      FloatLayer out = layer;
      zero_small(out.stages.at(0), opt.prune);
      out.stages[0].kind = StageKind::kSparse;
      out.kind = LayerKind::kFcSparse;
      return out;
    }
    default:
      throw ValidationError(
          fmt::format("layer '{}' of kind {} cannot be compressed further", layer.name, to_string(layer.kind)));
  }
}

// --- search ------------------------------------------------------------------

void from_json(const nlohmann::json& j, LayerOption& o) {
  for (const auto& [k, v] : j.items()) {
    if (k != "prune" && k != "rank") throw ValidationError(fmt::format("unknown layer option key '{}'", k));
  }
  o.prune = j.value("prune", 0.0);
  o.rank = j.value("rank", 0);
}

SweepGrid SweepGrid::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open sweep grid {}", path.string()));
  SweepGrid g;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& [k, v] : j.items()) {
      if (k != "layers" && k != "sample" && k != "seed") throw ValidationError(fmt::format("unknown sweep key '{}'", k));
    }
    g.layers = j.at("layers").get<std::map<std::string, std::vector<LayerOption>>>();
    g.sample = j.value("sample", std::size_t{0});
    g.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return g;
}

Network build_config(const FloatNetwork& base, const std::vector<LayerOption>& choices, const Dataset& data,
                     std::size_t calibration_samples) {
  if (choices.size() != base.layers.size()) {
    throw ContractViolation(fmt::format("{} choices for {} layers", choices.size(), base.layers.size()));
  }
  FloatNetwork f = base;
  for (std::size_t l = 0; l < f.layers.size(); ++l) f.layers[l] = compress_layer(base.layers[l], choices[l]);
  std::vector<std::vector<double>> calib;
  for (std::size_t s = 0; s < data.samples.size() && s < calibration_samples; ++s) {
    const FixedTensor& x = data.samples[s].input;
    std::vector<double> v(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) v[k] = dequantize(x.data[k], x.scale);
    calib.push_back(std::move(v));
  }
  return quantize_network(f, data.scale, calib);
}

void mark_frontier(std::vector<CompressionConfig>& configs) {
  for (auto& c : configs) {
    c.frontier = std::none_of(configs.begin(), configs.end(), [&](const CompressionConfig& d) {
      return d.accuracy >= c.accuracy && d.e_infer <= c.e_infer && (d.accuracy > c.accuracy || d.e_infer < c.e_infer);
    });
  }
}

int select_config(const std::vector<CompressionConfig>& configs) {
  int best = -1;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const CompressionConfig& c = configs[k];
    if (!c.feasible) continue;
    if (best < 0) {
      best = static_cast<int>(k);
      continue;
    }
    const CompressionConfig& b = configs[static_cast<std::size_t>(best)];
    if (c.impj != b.impj) {
      if (c.impj > b.impj) best = static_cast<int>(k);
    } else if (c.e_infer != b.e_infer) {
      if (c.e_infer < b.e_infer) best = static_cast<int>(k);
    } else if (c.id < b.id) {
      best = static_cast<int>(k);
    }
  }
  return best;
}

SearchResult search(const FloatNetwork& base, const SweepGrid& grid, const Dataset& data,
                    const GenesisOptions& opt) {
  for (const auto& [name, options] : grid.layers) {
    const bool known = std::any_of(base.layers.begin(), base.layers.end(), [&](const FloatLayer& l) { return l.name == name; });
    if (!known) throw ValidationError(fmt::format("sweep names unknown layer '{}'", name));
    if (options.empty()) throw ValidationError(fmt::format("sweep layer '{}' has no options", name));
  }
  std::vector<std::vector<LayerOption>> per_layer;
  std::size_t total = 1;
  for (const auto& l : base.layers) {
    auto it = grid.layers.find(l.name);
    per_layer.push_back(it == grid.layers.end() ? std::vector<LayerOption>{LayerOption{}} : it->second);
    total *= per_layer.back().size();
    if (total > 1000000) throw ValidationError("sweep grid exceeds one million points");
  }
  std::vector<std::size_t> points(total);
  for (std::size_t k = 0; k < total; ++k) points[k] = k;
  if (grid.sample > 0 && grid.sample < total) {
    std::vector<std::size_t> picked;
    std::mt19937_64 rng(grid.seed);
    std::sample(points.begin(), points.end(), std::back_inserter(picked), grid.sample, rng);
    points = std::move(picked);
  }

  SearchResult res;
  res.configs.resize(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    CompressionConfig& c = res.configs[k];
    std::size_t rest = points[k];
    std::vector<std::size_t> idx(per_layer.size());
    for (std::size_t l = per_layer.size(); l-- > 0;) {
      idx[l] = rest % per_layer[l].size();
      rest /= per_layer[l].size();
    }
    for (std::size_t l = 0; l < per_layer.size(); ++l) {
      c.choices.push_back(per_layer[l][idx[l]]);
      c.id += (l ? "-" : "") + std::to_string(idx[l]);
    }
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t k = next++; k < res.configs.size(); k = next++) {
      try {
        CompressionConfig& c = res.configs[k];
        const Network net = build_config(base, c.choices, data, opt.calibration_samples);
        const Evaluation ev = evaluate(net, data, opt.interesting_class);
        c.parameter_bytes = net.parameter_bytes();
        c.operations = net.operation_count();
        c.accuracy = ev.accuracy;
        c.t_p = ev.t_p;
        c.t_n = ev.t_n;
        c.e_infer = static_cast<double>(c.operations) * opt.energy_per_op_j;
        ImpjParams p = opt.impj;
        p.t_p = c.t_p;
        p.t_n = c.t_n;
        p.e_infer = c.e_infer;
        c.impj = impj_inference(p);
        c.feasible = c.parameter_bytes <= opt.memory_bound_bytes;
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = res.configs.size();
      }
    }
  };
  unsigned threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, res.configs.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::sort(res.configs.begin(), res.configs.end(),
            [](const CompressionConfig& a, const CompressionConfig& b) { return a.id < b.id; });
  mark_frontier(res.configs);
  res.chosen = select_config(res.configs);
  if (res.chosen >= 0) {
    CompressionConfig& c = res.configs[static_cast<std::size_t>(res.chosen)];
    c.chosen = true;
    res.chosen_network = build_config(base, c.choices, data, opt.calibration_samples);
  }
  return res;
}

std::string frontier_csv(const SearchResult& r) {
  std::string s = "config_id,bytes,ops,accuracy,t_p,t_n,e_infer,impj,feasible,chosen,frontier\n";
  for (const auto& c : r.configs) {
    s += fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.9g},{:.9g},{},{},{}\n", c.id, c.parameter_bytes, c.operations,
                     c.accuracy, c.t_p, c.t_n, c.e_infer, c.impj, c.feasible ? 1 : 0, c.chosen ? 1 : 0,
                     c.frontier ? 1 : 0);
  }
  return s;
}

// --- files -------------------------------------------------------------------

namespace {

template <typename T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(fmt::format("{}: missing '{}'", where, key));
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: bad '{}': {}", where, key, e.what()));
  }
}

StageKind stage_kind_from(const std::string& s, const std::string& where) {
  for (StageKind k : {StageKind::kConv, StageKind::kDense, StageKind::kSparse}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError(fmt::format("{}: unknown stage kind '{}'", where, s));
}

}  // namespace

FloatNetwork parse_float_network(const nlohmann::json& j) {
  FloatNetwork f;
  f.name = field<std::string>(j, "name", "float network");
  f.input_shape = field<std::vector<int>>(j, "input_shape", f.name);
  f.class_count = field<int>(j, "class_count", f.name);
  for (const auto& jl : field<nlohmann::json>(j, "layers", f.name)) {
    FloatLayer l;
    l.name = field<std::string>(jl, "name", f.name);
    const std::string where = fmt::format("layer '{}'", l.name);
    try {
      l.kind = layer_kind_from_string(field<std::string>(jl, "kind", where));
    } catch (const Error& e) {
      throw ValidationError(fmt::format("{}: {}", where, e.what()));
    }
    for (const auto& js : field<nlohmann::json>(jl, "stages", where)) {
      FloatStage st;
      st.kind = stage_kind_from(field<std::string>(js, "kind", where), where);
      st.shape = field<std::vector<int>>(js, "shape", where);
      st.weights = field<std::vector<double>>(js, "weights", where);
      st.bias = js.value("bias", std::vector<double>{});
      st.relu = js.value("relu", false);
      std::size_t n = 1;
      for (int d : st.shape) n *= static_cast<std::size_t>(std::max(d, 0));
      if (st.weights.size() != n) throw ValidationError(fmt::format("{}: weight count disagrees with shape", where));
      l.stages.push_back(std::move(st));
    }
    f.layers.push_back(std::move(l));
  }
  return f;
}

nlohmann::json float_network_json(const FloatNetwork& f) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : f.layers) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& st : l.stages) {
      stages.push_back({{"kind", std::string(to_string(st.kind))},
                        {"shape", st.shape},
                        {"weights", st.weights},
                        {"bias", st.bias},
                        {"relu", st.relu}});
    }
    layers.push_back({{"name", l.name}, {"kind", std::string(to_string(l.kind))}, {"stages", stages}});
  }
  return {{"name", f.name}, {"input_shape", f.input_shape}, {"class_count", f.class_count}, {"layers", layers}};
}

FloatNetwork load_float_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
  try {
    return parse_float_network(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void save_float_network(const FloatNetwork& f, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  out << float_network_json(f).dump(1) << '\n';
}

void to_json(nlohmann::json& j, const LayerOption& o) { j = {{"prune", o.prune}, {"rank", o.rank}}; }

void to_json(nlohmann::json& j, const SweepGrid& g) {
  j = {{"layers", g.layers}, {"sample", g.sample}, {"seed", g.seed}};
}

void to_json(nlohmann::json& j, const GenesisOptions& o) {
  j = {{"p", o.impj.p},
       {"e_sense", o.impj.e_sense},
       {"e_comm", o.impj.e_comm},
       {"energy_per_op_j", o.energy_per_op_j},
       {"memory_bound_bytes", o.memory_bound_bytes},
       {"interesting_class", o.interesting_class},
       {"threads", o.threads},
       {"calibration_samples", o.calibration_samples}};
}

void from_json(const nlohmann::json& j, GenesisOptions& o) {
  static const char* keys[] = {"p", "e_sense", "e_comm", "energy_per_op_j", "memory_bound_bytes",
                               "interesting_class", "threads", "calibration_samples"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(std::begin(keys), std::end(keys), k) == std::end(keys)) {
      throw ValidationError(fmt::format("unknown search option '{}'", k));
    }
  }
  o = GenesisOptions{};
  o.impj.p = j.value("p", o.impj.p);
  o.impj.e_sense = j.value("e_sense", o.impj.e_sense);
  o.impj.e_comm = j.value("e_comm", o.impj.e_comm);
  o.energy_per_op_j = j.value("energy_per_op_j", o.energy_per_op_j);
  o.memory_bound_bytes = j.value("memory_bound_bytes", o.memory_bound_bytes);
  o.interesting_class = j.value("interesting_class", o.interesting_class);
  o.threads = j.value("threads", o.threads);
  o.calibration_samples = j.value("calibration_samples", o.calibration_samples);
}

}  // namespace imc

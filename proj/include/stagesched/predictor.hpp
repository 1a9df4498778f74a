/*
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stagesched/io.hpp"
#include "stagesched/model.hpp"

namespace stagesched {

struct TrainingRow {
  FeatureVector features;
  std::string machine_type;
  int stage = 0;
  Ms duration_ms = 0;
  friend bool operator==(const TrainingRow&, const TrainingRow&) = default;
};

struct TrainingTable {
  std::vector<std::string> feature_names;  // column order of the source CSV
  std::vector<TrainingRow> rows;
};

// CSV schema: one column per feature plus machine_type, stage, duration_ms.
inline TrainingTable parse_training_csv(const std::string& text,
                                        const std::string& origin = "<training>") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw Error("schema error: empty file (" + origin + ")");

  const auto columns = detail::split(line, ',');
  TrainingTable table;
  int type_col = -1, stage_col = -1, duration_col = -1;
  std::vector<int> feature_cols;
  std::set<std::string> seen;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const std::string& name = columns[c];
    if (name.empty()) throw Error("schema error: empty column name (" + origin + ")");
    if (!seen.insert(name).second)
      throw Error("schema error: duplicate column " + name + " (" + origin + ")");
    if (name == "machine_type")
      type_col = static_cast<int>(c);
    else if (name == "stage")
      stage_col = static_cast<int>(c);
    else if (name == "duration_ms")
      duration_col = static_cast<int>(c);
    else {
      feature_cols.push_back(static_cast<int>(c));
      table.feature_names.push_back(name);
    }
  }
  for (const auto& [name, col] : {std::pair<const char*, int>{"machine_type", type_col},
                                  {"stage", stage_col},
                                  {"duration_ms", duration_col}}) {
    if (col < 0) throw Error("schema error: missing column " + std::string(name) + " (" + origin + ")");
  }
  if (feature_cols.empty()) throw Error("schema error: no feature columns (" + origin + ")");

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != columns.size())
      throw Error("parse error at row " + std::to_string(lineno) + ": expected " +
                  std::to_string(columns.size()) + " fields (" + origin + ")");
    TrainingRow row;
    row.machine_type = fields[type_col];
    if (row.machine_type.empty())
      throw Error("parse error at row " + std::to_string(lineno) + ": empty machine_type");
    long long stage = 0;
    if (!detail::parse_int(fields[stage_col], stage) || stage < 1)
      throw Error("parse error at row " + std::to_string(lineno) + " column stage");
    row.stage = static_cast<int>(stage);
    long long duration = 0;
    if (!detail::parse_int(fields[duration_col], duration))
      throw Error("parse error at row " + std::to_string(lineno) + " column duration_ms");
    if (duration <= 0)
      throw Error("invalid duration at row " + std::to_string(lineno) + ": " +
                  std::to_string(duration) + " ms");
    row.duration_ms = static_cast<Ms>(duration);
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
      double value = 0.0;
      if (!detail::parse_double(fields[feature_cols[f]], value))
        throw Error("parse error at row " + std::to_string(lineno) + " column " +
                    table.feature_names[f]);
      const std::string& name = table.feature_names[f];
      if (name == "size_mb" && value <= 0.0)
        throw Error("invariant violation at row " + std::to_string(lineno) +
                    ": size_mb must be positive");
      if (name == "pct_duplicates" && (value < 0.0 || value > 100.0))
        throw Error("invariant violation at row " + std::to_string(lineno) +
                    ": pct_duplicates outside [0,100]");
      row.features[name] = value;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline TrainingTable ingest_training_table(const std::filesystem::path& path) {
  return parse_training_csv(read_text_file(path), path.string());
}

enum class ModelKind { tree_ensemble, linear };

inline const char* to_string(ModelKind k) {
  return k == ModelKind::tree_ensemble ? "tree_ensemble" : "linear";
}

struct Hyperparams {
  int trees = 100;
  int max_depth = 10;
  double bootstrap_fraction = 1.0;
  int min_samples_leaf = 2;
  int feature_subsample = 0;  // 0: ceil(informative features / 3)
  double l1_lambda = 0.01;    // after feature standardization
  int max_iterations = 10'000;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const std::vector<double>& x) const {
    int node = 0;
    while (nodes[node].feature >= 0)
      node = x[nodes[node].feature] <= nodes[node].threshold ? nodes[node].left
                                                             : nodes[node].right;
    return nodes[node].value;
  }
  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

struct LinearParams {
  std::vector<double> coef;  // in standardized feature space
  std::vector<double> mean;
  std::vector<double> stdev;  // 0 marks an inert (constant) column
  double target_mean = 0.0;

  double predict(const std::vector<double>& x) const {
    double y = target_mean;
    for (std::size_t j = 0; j < coef.size(); ++j) {
      if (stdev[j] > 0.0) y += coef[j] * (x[j] - mean[j]) / stdev[j];
    }
    return y;
  }
  friend bool operator==(const LinearParams&, const LinearParams&) = default;
};

struct GroupModel {
  std::vector<RegressionTree> trees;
  LinearParams linear;
  Ms train_min = 0;
  Ms train_max = 0;
  std::vector<double> feature_means;  // for optional imputation
  friend bool operator==(const GroupModel&, const GroupModel&) = default;
};

using GroupKey = std::pair<std::string, int>;  // (machine_type, stage)

inline std::string group_label(const GroupKey& key) {
  return "(" + key.first + ", stage " + std::to_string(key.second) + ")";
}

struct PredictorModel {
  ModelKind kind = ModelKind::tree_ensemble;
  Hyperparams hyperparams;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
  std::map<GroupKey, GroupModel> groups;
  bool mean_impute = false;  // fill missing predict-time features with training means
  friend bool operator==(const PredictorModel&, const PredictorModel&) = default;
};

struct RegressionMetrics {
  double r2 = 0.0;
  double mse = 0.0;  // seconds squared
  double mae = 0.0;  // seconds
};

namespace detail {

struct GroupData {
  std::vector<std::vector<double>> x;  // row major
  std::vector<double> y;               // ms
};

inline GroupData to_group_data(const std::vector<const TrainingRow*>& rows,
                               const std::vector<std::string>& feature_names) {
  GroupData d;
  d.x.reserve(rows.size());
  d.y.reserve(rows.size());
  for (const TrainingRow* row : rows) {
    std::vector<double> x;
    x.reserve(feature_names.size());
    for (const auto& name : feature_names) {
      auto it = row->features.find(name);
      if (it == row->features.end()) throw Error("training row missing feature " + name);
      x.push_back(it->second);
    }
    d.x.push_back(std::move(x));
    d.y.push_back(static_cast<double>(row->duration_ms));
  }
  return d;
}

// Best SSE-reducing split of `idx` on `feature`; returns false when no split
// satisfies the leaf-size floor or reduces the error.
inline bool best_split_on_feature(const GroupData& d, const std::vector<int>& idx, int feature,
                                  int min_leaf, double& best_score, double& best_threshold) {
  thread_local std::vector<int> order;
  order = idx;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double va = d.x[a][feature], vb = d.x[b][feature];
    return va < vb || (va == vb && a < b);
  });
  const int n = static_cast<int>(order.size());
  double total = 0.0;
  for (int i : order) total += d.y[i];
  const double parent_score = total * total / n;

  double left_sum = 0.0;
  bool found = false;
  for (int i = 0; i + 1 < n; ++i) {
    left_sum += d.y[order[i]];
    if (d.x[order[i + 1]][feature] == d.x[order[i]][feature]) continue;
    const int left_count = i + 1;
    const int right_count = n - left_count;
    if (left_count < min_leaf || right_count < min_leaf) continue;
    const double right_sum = total - left_sum;
    const double score = left_sum * left_sum / left_count + right_sum * right_sum / right_count;
    if (score <= parent_score + 1e-9 * std::max(1.0, std::abs(parent_score))) continue;
    if (!found || score > best_score) {
      found = true;
      best_score = score;
      best_threshold = 0.5 * (d.x[order[i]][feature] + d.x[order[i + 1]][feature]);
    }
  }
  return found;
}

inline int grow_tree(const GroupData& d, RegressionTree& tree, std::vector<int> idx, int depth,
                     const Hyperparams& hp, const std::vector<int>& informative, int mtry,
                     Rng& rng) {
  const int n = static_cast<int>(idx.size());
  double mean = 0.0;
  for (int i : idx) mean += d.y[i];
  mean /= n;

  auto make_leaf = [&]() {
    tree.nodes.push_back({-1, 0.0, -1, -1, mean});
    return static_cast<int>(tree.nodes.size()) - 1;
  };
  if (depth >= hp.max_depth || n < 2 * hp.min_samples_leaf) return make_leaf();

  // Sample mtry candidate features from the informative set (partial
  // Fisher-Yates); constant columns never enter the pool, so they cannot
  // perturb the draw.
  thread_local std::vector<int> pool;
  pool = informative;
  const int draws = std::min<int>(mtry, static_cast<int>(pool.size()));
  int best_feature = -1;
  double best_score = 0.0, best_threshold = 0.0;
  for (int k = 0; k < draws; ++k) {
    const std::size_t pick = k + rng.below(pool.size() - k);
    std::swap(pool[k], pool[pick]);
    const int feature = pool[k];
    double score = 0.0, threshold = 0.0;
    if (best_split_on_feature(d, idx, feature, hp.min_samples_leaf, score, threshold)) {
      if (best_feature < 0 || score > best_score) {
        best_feature = feature;
        best_score = score;
        best_threshold = threshold;
      }
    }
  }
  if (best_feature < 0) return make_leaf();

  std::vector<int> left_idx, right_idx;
  for (int i : idx) {
    (d.x[i][best_feature] <= best_threshold ? left_idx : right_idx).push_back(i);
  }
  const int node = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({best_feature, best_threshold, -1, -1, 0.0});
  const int left = grow_tree(d, tree, std::move(left_idx), depth + 1, hp, informative, mtry, rng);
  const int right =
      grow_tree(d, tree, std::move(right_idx), depth + 1, hp, informative, mtry, rng);
  tree.nodes[node].left = left;
  tree.nodes[node].right = right;
  return node;
}

inline std::vector<RegressionTree> fit_forest(const GroupData& d, const Hyperparams& hp,
                                              std::uint64_t seed) {
  const int n = static_cast<int>(d.y.size());
  const int p = static_cast<int>(d.x.empty() ? 0 : d.x[0].size());

  std::vector<int> informative;
  for (int j = 0; j < p; ++j) {
    const double first = d.x[0][j];
    for (int i = 1; i < n; ++i) {
      if (d.x[i][j] != first) {
        informative.push_back(j);
        break;
      }
    }
  }
  const int mtry =
      hp.feature_subsample > 0
          ? hp.feature_subsample
          : std::max(1, static_cast<int>(std::ceil(static_cast<double>(informative.size()) / 3.0)));

  std::vector<RegressionTree> forest;
  forest.reserve(hp.trees);
  const int n_boot = std::max(1, static_cast<int>(std::llround(hp.bootstrap_fraction * n)));
  for (int t = 0; t < hp.trees; ++t) {
    Rng rng(derive_seed(seed, "tree:" + std::to_string(t)));
    std::vector<int> sample(n_boot);
    for (auto& i : sample) i = static_cast<int>(rng.below(n));
    RegressionTree tree;
    if (informative.empty()) {
      double mean = 0.0;
      for (int i : sample) mean += d.y[i];
      tree.nodes.push_back({-1, 0.0, -1, -1, mean / n_boot});
    } else {
      grow_tree(d, tree, std::move(sample), 0, hp, informative, mtry, rng);
    }
    forest.push_back(std::move(tree));
  }
  return forest;
}

// L1-penalized least squares on standardized features, fitted by cyclic
// coordinate descent. Constant columns are inert (coefficient 0).
inline LinearParams fit_lasso(const GroupData& d, const Hyperparams& hp) {
  const int n = static_cast<int>(d.y.size());
  const int p = static_cast<int>(d.x.empty() ? 0 : d.x[0].size());
  LinearParams params;
  params.coef.assign(p, 0.0);
  params.mean.assign(p, 0.0);
  params.stdev.assign(p, 0.0);

  for (int j = 0; j < p; ++j) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += d.x[i][j];
    mean /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (d.x[i][j] - mean) * (d.x[i][j] - mean);
    var /= n;
    params.mean[j] = mean;
    params.stdev[j] = var > 0.0 ? std::sqrt(var) : 0.0;
  }
  params.target_mean = std::accumulate(d.y.begin(), d.y.end(), 0.0) / n;

  std::vector<int> active;
  for (int j = 0; j < p; ++j)
    if (params.stdev[j] > 0.0) active.push_back(j);

  std::vector<std::vector<double>> xs(n, std::vector<double>(active.size()));
  for (int i = 0; i < n; ++i)
    for (std::size_t a = 0; a < active.size(); ++a)
      xs[i][a] = (d.x[i][active[a]] - params.mean[active[a]]) / params.stdev[active[a]];

  std::vector<double> residual(n);
  for (int i = 0; i < n; ++i) residual[i] = d.y[i] - params.target_mean;

  double y_scale = 0.0;
  for (int i = 0; i < n; ++i) y_scale += residual[i] * residual[i];
  y_scale = std::sqrt(y_scale / n);
  const double tolerance = 1e-9 * (y_scale + 1.0);

  std::vector<double> beta(active.size(), 0.0);
  for (int iter = 0; iter < hp.max_iterations; ++iter) {
    double max_delta = 0.0;
    for (std::size_t a = 0; a < active.size(); ++a) {
      double rho = 0.0;
      for (int i = 0; i < n; ++i) rho += xs[i][a] * (residual[i] + xs[i][a] * beta[a]);
      rho /= n;
      const double updated =
          rho > hp.l1_lambda ? rho - hp.l1_lambda : (rho < -hp.l1_lambda ? rho + hp.l1_lambda : 0.0);
      const double delta = updated - beta[a];
      if (delta != 0.0) {
        for (int i = 0; i < n; ++i) residual[i] -= xs[i][a] * delta;
        beta[a] = updated;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < tolerance) break;
  }

  for (std::size_t a = 0; a < active.size(); ++a) params.coef[active[a]] = beta[a];
  return params;
}

inline GroupModel fit_group(ModelKind kind, const Hyperparams& hp,
                            const std::vector<const TrainingRow*>& rows,
                            const std::vector<std::string>& feature_names, std::uint64_t seed) {
  const GroupData d = to_group_data(rows, feature_names);
  GroupModel g;
  g.train_min = std::numeric_limits<Ms>::max();
  g.train_max = std::numeric_limits<Ms>::min();
  for (const TrainingRow* row : rows) {
    g.train_min = std::min(g.train_min, row->duration_ms);
    g.train_max = std::max(g.train_max, row->duration_ms);
  }
  g.feature_means.assign(feature_names.size(), 0.0);
  for (const auto& x : d.x)
    for (std::size_t j = 0; j < x.size(); ++j) g.feature_means[j] += x[j];
  for (auto& m : g.feature_means) m /= static_cast<double>(d.x.size());

  if (kind == ModelKind::tree_ensemble)
    g.trees = fit_forest(d, hp, seed);
  else
    g.linear = fit_lasso(d, hp);
  return g;
}

inline double group_predict(ModelKind kind, const GroupModel& g, const std::vector<double>& x) {
  if (kind == ModelKind::linear) return g.linear.predict(x);
  double sum = 0.0;
  for (const auto& tree : g.trees) sum += tree.predict(x);
  return sum / static_cast<double>(g.trees.size());
}

inline std::map<GroupKey, std::vector<const TrainingRow*>> group_rows(const TrainingTable& table) {
  std::map<GroupKey, std::vector<const TrainingRow*>> groups;
  for (const auto& row : table.rows) groups[{row.machine_type, row.stage}].push_back(&row);
  return groups;
}

// Residual metrics in seconds: R^2 = 1 - SS_res/SS_tot, MSE mean squared
// residual, MAE mean absolute residual.
inline RegressionMetrics compute_metrics(const std::vector<double>& y_ms,
                                         const std::vector<double>& yhat_ms) {
  const int n = static_cast<int>(y_ms.size());
  double mean = 0.0;
  for (double y : y_ms) mean += y / 1000.0;
  mean /= n;
  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = y_ms[i] / 1000.0;
    const double r = y - yhat_ms[i] / 1000.0;
    ss_res += r * r;
    ss_tot += (y - mean) * (y - mean);
    abs_sum += std::abs(r);
  }
  RegressionMetrics m;
  m.mse = ss_res / n;
  m.mae = abs_sum / n;
  if (ss_tot > 0.0)
    m.r2 = 1.0 - ss_res / ss_tot;
  else
    m.r2 = ss_res > 0.0 ? 0.0 : 1.0;
  return m;
}

}  // namespace detail

inline void validate_hyperparams(const Hyperparams& hp) {
  if (hp.trees < 1) throw Error("trees must be >= 1");
  if (hp.max_depth < 1) throw Error("max_depth must be >= 1");
  if (hp.bootstrap_fraction <= 0.0 || hp.bootstrap_fraction > 1.0)
    throw Error("bootstrap_fraction must be in (0,1]");
  if (hp.min_samples_leaf < 1) throw Error("min_samples_leaf must be >= 1");
  if (hp.feature_subsample < 0) throw Error("feature_subsample must be >= 0");
  if (hp.l1_lambda < 0.0) throw Error("l1_lambda must be >= 0");
  if (hp.max_iterations < 1) throw Error("max_iterations must be >= 1");
}

// One fitted regressor per (machine_type, stage) group. Deterministic for a
// fixed (table, kind, hyperparams, seed).
inline PredictorModel train(const TrainingTable& table, ModelKind kind, const Hyperparams& hp,
                            std::uint64_t seed) {
  validate_hyperparams(hp);
  PredictorModel model;
  model.kind = kind;
  model.hyperparams = hp;
  model.seed = seed;
  model.feature_names = table.feature_names;

  const auto groups = detail::group_rows(table);
  if (groups.empty()) throw Error("insufficient data: training table is empty");
  for (const auto& [key, rows] : groups) {
    if (rows.size() < 2)
      throw Error("insufficient data for group " + group_label(key) + ": " +
                  std::to_string(rows.size()) + " row(s), need at least 2");
    const std::uint64_t group_seed =
        derive_seed(seed, "group:" + key.first + ":" + std::to_string(key.second));
    model.groups[key] = detail::fit_group(kind, hp, rows, table.feature_names, group_seed);
  }
  return model;
}

// Duration prediction for one (features, machine_type, stage) query. Missing
// features are a hard error unless the model's mean-imputation flag is set;
// unknown feature names are always an error.
inline Ms predict(const PredictorModel& model, const FeatureVector& features,
                  const std::string& machine_type, int stage) {
  auto it = model.groups.find({machine_type, stage});
  if (it == model.groups.end())
    throw Error("no model for group " + group_label({machine_type, stage}));
  const GroupModel& group = it->second;

  std::vector<double> x(model.feature_names.size(), 0.0);
  for (std::size_t j = 0; j < model.feature_names.size(); ++j) {
    const std::string& name = model.feature_names[j];
    auto f = features.find(name);
    if (f == features.end()) {
      if (!model.mean_impute) throw Error("feature mismatch: missing " + name);
      x[j] = group.feature_means[j];
      continue;
    }
    if (!std::isfinite(f->second)) throw Error("non-finite feature " + name);
    x[j] = f->second;
  }
  for (const auto& [name, value] : features) {
    (void)value;
    if (std::find(model.feature_names.begin(), model.feature_names.end(), name) ==
        model.feature_names.end())
      throw Error("feature mismatch: unexpected " + name);
  }

  const double prediction = detail::group_predict(model.kind, group, x);
  if (!std::isfinite(prediction)) throw Error("non-finite prediction");
  return std::max<Ms>(1, static_cast<Ms>(std::llround(prediction)));
}

// Seeded shuffled k-fold cross validation, one metric set per group, averaged
// over folds.
inline std::map<GroupKey, RegressionMetrics> evaluate_kfold(const TrainingTable& table,
                                                            ModelKind kind, const Hyperparams& hp,
                                                            int k, std::uint64_t seed) {
  validate_hyperparams(hp);
  if (k < 2) throw Error("fold count must be >= 2");
  const auto groups = detail::group_rows(table);
  if (groups.empty()) throw Error("insufficient data: training table is empty");

  std::map<GroupKey, RegressionMetrics> metrics;
  for (const auto& [key, rows] : groups) {
    const int n = static_cast<int>(rows.size());
    if (n < k)
      throw Error("insufficient data for " + std::to_string(k) + " folds: group " +
                  group_label(key) + " has " + std::to_string(n) + " row(s)");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "kfold:" + key.first + ":" + std::to_string(key.second)));
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }

    RegressionMetrics sum;
    int offset = 0;
    for (int fold = 0; fold < k; ++fold) {
      const int fold_size = n / k + (fold < n % k ? 1 : 0);
      std::vector<const TrainingRow*> train_rows, test_rows;
      for (int i = 0; i < n; ++i) {
        if (i >= offset && i < offset + fold_size)
          test_rows.push_back(rows[order[i]]);
        else
          train_rows.push_back(rows[order[i]]);
      }
      offset += fold_size;
      if (train_rows.size() < 2)
        throw Error("insufficient data for " + std::to_string(k) + " folds: group " +
                    group_label(key) + " leaves " + std::to_string(train_rows.size()) +
                    " training row(s)");

      const std::uint64_t fold_seed =
          derive_seed(seed, "kfold-fit:" + key.first + ":" + std::to_string(key.second) + ":" +
                                std::to_string(fold));
      const GroupModel gm =
          detail::fit_group(kind, hp, train_rows, table.feature_names, fold_seed);

      std::vector<double> y, yhat;
      for (const TrainingRow* row : test_rows) {
        std::vector<double> x;
        for (const auto& name : table.feature_names) x.push_back(row->features.at(name));
        y.push_back(static_cast<double>(row->duration_ms));
        yhat.push_back(detail::group_predict(kind, gm, x));
      }
      const RegressionMetrics fold_metrics = detail::compute_metrics(y, yhat);
      sum.r2 += fold_metrics.r2;
      sum.mse += fold_metrics.mse;
      sum.mae += fold_metrics.mae;
    }
    metrics[key] = {sum.r2 / k, sum.mse / k, sum.mae / k};
  }
  return metrics;
}

// Materializes the complete time matrix for a workload from the fitted model.
inline TimeMatrix build_time_matrix(const PredictorModel& model, const std::vector<Job>& jobs,
                                    const std::vector<Machine>& machines, int stages) {
  if (stages < 1) throw Error("stages must be >= 1");
  TimeMatrix matrix;
  for (const auto& job : jobs) {
    for (int q = 1; q <= stages; ++q) {
      for (const auto& machine : machines) {
        try {
          matrix.set(job.id, q, machine.id,
                     predict(model, job.features, machine.machine_type, q));
        } catch (const Error& e) {
          throw Error("(" + job.id + ", stage " + std::to_string(q) + ", " + machine.id +
                      "): " + e.what());
        }
      }
    }
  }
  return matrix;
}

// ---------------------------------------------------------------------------
// Model persistence: self-describing JSON, exact round trip.
// ---------------------------------------------------------------------------

inline std::string serialize_model(const PredictorModel& model) {
  nlohmann::json doc;
  doc["kind"] = to_string(model.kind);
  doc["seed"] = model.seed;
  doc["mean_impute"] = model.mean_impute;
  doc["feature_names"] = model.feature_names;
  doc["hyperparams"] = {{"trees", model.hyperparams.trees},
                        {"max_depth", model.hyperparams.max_depth},
                        {"bootstrap_fraction", model.hyperparams.bootstrap_fraction},
                        {"min_samples_leaf", model.hyperparams.min_samples_leaf},
                        {"feature_subsample", model.hyperparams.feature_subsample},
                        {"l1_lambda", model.hyperparams.l1_lambda},
                        {"max_iterations", model.hyperparams.max_iterations}};
  auto groups = nlohmann::json::array();
  for (const auto& [key, g] : model.groups) {
    nlohmann::json entry;
    entry["machine_type"] = key.first;
    entry["stage"] = key.second;
    entry["train_min"] = g.train_min;
    entry["train_max"] = g.train_max;
    entry["feature_means"] = g.feature_means;
    if (model.kind == ModelKind::tree_ensemble) {
      auto trees = nlohmann::json::array();
      for (const auto& tree : g.trees) {
        auto nodes = nlohmann::json::array();
        for (const auto& n : tree.nodes)
          nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
        trees.push_back(nodes);
      }
      entry["trees"] = trees;
    } else {
      entry["linear"] = {{"coef", g.linear.coef},
                         {"mean", g.linear.mean},
                         {"stdev", g.linear.stdev},
                         {"target_mean", g.linear.target_mean}};
    }
    groups.push_back(entry);
  }
  doc["groups"] = groups;
  return doc.dump(2) + "\n";
}

inline PredictorModel parse_model(const std::string& text, const std::string& origin = "<model>") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(origin + ": " + e.what());
  }
  PredictorModel model;
  try {
    const std::string kind = doc.at("kind").get<std::string>();
    if (kind == "tree_ensemble")
      model.kind = ModelKind::tree_ensemble;
    else if (kind == "linear")
      model.kind = ModelKind::linear;
    else
      throw Error(origin + ": unknown model kind '" + kind + "'");
    model.seed = doc.at("seed").get<std::uint64_t>();
    model.mean_impute = doc.at("mean_impute").get<bool>();
    model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    const auto& hp = doc.at("hyperparams");
    model.hyperparams.trees = hp.at("trees").get<int>();
    model.hyperparams.max_depth = hp.at("max_depth").get<int>();
    model.hyperparams.bootstrap_fraction = hp.at("bootstrap_fraction").get<double>();
    model.hyperparams.min_samples_leaf = hp.at("min_samples_leaf").get<int>();
    model.hyperparams.feature_subsample = hp.at("feature_subsample").get<int>();
    model.hyperparams.l1_lambda = hp.at("l1_lambda").get<double>();
    model.hyperparams.max_iterations = hp.at("max_iterations").get<int>();
    for (const auto& entry : doc.at("groups")) {
      GroupModel g;
      const GroupKey key{entry.at("machine_type").get<std::string>(),
                         entry.at("stage").get<int>()};
      g.train_min = entry.at("train_min").get<Ms>();
      g.train_max = entry.at("train_max").get<Ms>();
      g.feature_means = entry.at("feature_means").get<std::vector<double>>();
      if (model.kind == ModelKind::tree_ensemble) {
        for (const auto& tree_json : entry.at("trees")) {
          RegressionTree tree;
          for (const auto& n : tree_json) {
            tree.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                                  n.at(3).get<int>(), n.at(4).get<double>()});
          }
          g.trees.push_back(std::move(tree));
        }
      } else {
        const auto& lin = entry.at("linear");
        g.linear.coef = lin.at("coef").get<std::vector<double>>();
        g.linear.mean = lin.at("mean").get<std::vector<double>>();
        g.linear.stdev = lin.at("stdev").get<std::vector<double>>();
        g.linear.target_mean = lin.at("target_mean").get<double>();
      }
      model.groups[key] = std::move(g);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(origin + ": " + e.what());
  }
  return model;
}

inline PredictorModel load_model(const std::filesystem::path& path) {
  return parse_model(read_text_file(path), path.string());
}

inline void save_model(const std::filesystem::path& path, const PredictorModel& model) {
  write_text_file(path, serialize_model(model));
}

}  // namespace stagesched

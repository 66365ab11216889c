#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wdgnn/graph.hpp"
#include "wdgnn/online.hpp"
#include "wdgnn/training.hpp"

namespace wdgnn {

struct RatingsMatrix {
  Matrix values;                  // users x movies, observed ratings in [1,5]
  Matrix mask;                    // 1 where observed
  std::vector<int> movie_ids;     // original 1-based ids of the kept movies
  std::vector<std::string> titles;

  int n_users() const { return values.rows; }
  int n_movies() const { return values.cols; }
};

// Tab-separated "user item rating timestamp" rows, restricted to the
// `keep_movies` most-rated movies. Titles are loaded from a u.item file next
// to the ratings file when present.
inline RatingsMatrix parse_movielens(const std::string& path, int keep_movies = 400) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_movielens: cannot open " + path);

  struct Row {
    int user, item, rating;
  };
  std::vector<Row> rows;
  std::map<int, int> movie_count;
  int max_user = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long user, item, rating, timestamp;
    if (!(ls >> user >> item >> rating >> timestamp))
      throw std::runtime_error("parse_movielens: malformed row at line " + std::to_string(line_no));
    if (user < 1 || item < 1)
      throw std::runtime_error("parse_movielens: bad id at line " + std::to_string(line_no));
    if (rating < 1 || rating > 5)
      throw std::runtime_error("parse_movielens: rating outside 1-5 at line " + std::to_string(line_no));
    rows.push_back({static_cast<int>(user), static_cast<int>(item), static_cast<int>(rating)});
    ++movie_count[static_cast<int>(item)];
    max_user = std::max(max_user, static_cast<int>(user));
  }
  if (rows.empty()) throw std::runtime_error("parse_movielens: empty file");

  // most-rated movies first; ties by id for determinism
  std::vector<std::pair<int, int>> by_count;  // (count, id)
  for (auto& [id, count] : movie_count) by_count.emplace_back(count, id);
  std::sort(by_count.begin(), by_count.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  int kept = std::min<int>(keep_movies, static_cast<int>(by_count.size()));

  RatingsMatrix rm;
  rm.movie_ids.reserve(kept);
  std::map<int, int> column_of;
  for (int c = 0; c < kept; ++c) {
    rm.movie_ids.push_back(by_count[c].second);
    column_of[by_count[c].second] = c;
  }
  rm.values = Matrix(max_user, kept);
  rm.mask = Matrix(max_user, kept);
  for (const Row& r : rows) {
    auto it = column_of.find(r.item);
    if (it == column_of.end()) continue;
    rm.values(r.user - 1, it->second) = r.rating;
    rm.mask(r.user - 1, it->second) = 1.0;
  }

  rm.titles.assign(kept, "");
  for (int c = 0; c < kept; ++c) rm.titles[c] = "movie_" + std::to_string(rm.movie_ids[c]);
  std::string item_path = path;
  size_t slash = item_path.find_last_of('/');
  item_path = (slash == std::string::npos ? "" : item_path.substr(0, slash + 1)) + "u.item";
  std::ifstream items(item_path);
  if (items) {
    while (std::getline(items, line)) {
      size_t bar = line.find('|');
      if (bar == std::string::npos) continue;
      int id = std::atoi(line.substr(0, bar).c_str());
      auto it = column_of.find(id);
      if (it == column_of.end()) continue;
      size_t bar2 = line.find('|', bar + 1);
      rm.titles[it->second] = line.substr(bar + 1, bar2 - bar - 1);
    }
  }
  return rm;
}

inline int find_movie(const RatingsMatrix& rm, const std::string& title_substring) {
  for (int c = 0; c < rm.n_movies(); ++c)
    if (rm.titles[c].find(title_substring) != std::string::npos) return c;
  throw std::runtime_error("find_movie: no movie matching '" + title_substring + "'");
}

inline RatingsMatrix restrict_users(const RatingsMatrix& rm, const std::vector<int>& users) {
  RatingsMatrix out;
  out.movie_ids = rm.movie_ids;
  out.titles = rm.titles;
  out.values = Matrix(static_cast<int>(users.size()), rm.n_movies());
  out.mask = Matrix(static_cast<int>(users.size()), rm.n_movies());
  for (size_t r = 0; r < users.size(); ++r)
    for (int c = 0; c < rm.n_movies(); ++c) {
      out.values(static_cast<int>(r), c) = rm.values(users[r], c);
      out.mask(static_cast<int>(r), c) = rm.mask(users[r], c);
    }
  return out;
}

// Pearson correlation between two movie columns over their co-rating users;
// returns false when fewer than two co-ratings or a degenerate variance.
inline bool pearson_similarity(const RatingsMatrix& rm, int a, int b, double& out) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  int n = 0;
  for (int u = 0; u < rm.n_users(); ++u) {
    if (rm.mask(u, a) == 0.0 || rm.mask(u, b) == 0.0) continue;
    double x = rm.values(u, a), y = rm.values(u, b);
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return false;
  double vx = sxx - sx * sx / n;
  double vy = syy - sy * sy / n;
  if (vx <= 1e-12 || vy <= 1e-12) return false;
  out = (sxy - sx * sy / n) / std::sqrt(vx * vy);
  return true;
}

// Movie similarity network: per node keep the top_k highest correlations,
// symmetrize by union, normalize to spectral radius 1. Movies with no valid
// correlation against any other movie end up isolated, with a warning.
inline Gso build_similarity_graph(const RatingsMatrix& rm, int top_k = 10) {
  int m = rm.n_movies();
  if (m < 2) throw std::invalid_argument("build_similarity_graph: need at least 2 movies");
  Matrix sim(m, m);
  Matrix valid(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      double s;
      if (pearson_similarity(rm, a, b, s)) {
        sim(a, b) = s;
        sim(b, a) = s;
        valid(a, b) = 1.0;
        valid(b, a) = 1.0;
      }
    }

  Gso g{Matrix(m, m), true};
  for (int a = 0; a < m; ++a) {
    std::vector<int> candidates;
    for (int b = 0; b < m; ++b)
      if (b != a && valid(a, b) != 0.0) candidates.push_back(b);
    if (candidates.empty()) {
      std::fprintf(stderr, "build_similarity_graph: movie %d (%s) has no valid correlations\n",
                   rm.movie_ids[a], rm.titles[a].c_str());
      continue;
    }
    int keep = std::min<int>(top_k, static_cast<int>(candidates.size()));
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                      [&](int x, int y) {
                        if (sim(a, x) != sim(a, y)) return sim(a, x) > sim(a, y);
                        return x < y;
                      });
    for (int c = 0; c < keep; ++c) {
      int b = candidates[c];
      g.entries(a, b) = sim(a, b);
      g.entries(b, a) = sim(a, b);
    }
  }
  return normalize_adjacency(g);
}

// Users who rated the target movie, split (seeded) into train/test.
inline std::pair<std::vector<int>, std::vector<int>> split_users(const RatingsMatrix& rm,
                                                                 int target_movie,
                                                                 double test_fraction,
                                                                 uint64_t seed) {
  std::vector<int> raters;
  for (int u = 0; u < rm.n_users(); ++u)
    if (rm.mask(u, target_movie) != 0.0) raters.push_back(u);
  if (raters.empty()) throw std::runtime_error("split_users: no ratings for target movie");
  Rng rng(Rng::derive(seed, 0x3317));
  rng.shuffle(raters);
  int n_test = std::max(1, static_cast<int>(std::lround(test_fraction * raters.size())));
  std::vector<int> test(raters.begin(), raters.begin() + n_test);
  std::vector<int> train(raters.begin() + n_test, raters.end());
  return {train, test};
}

// One sample per user: the rating vector with the target entry zeroed; the
// loss reads the prediction at the target node only.
inline Dataset make_movielens_dataset(const RatingsMatrix& rm, const Gso& graph, int target_movie,
                                      const std::vector<int>& users) {
  Dataset ds;
  ds.graphs = {graph};
  ds.num_classes = 0;
  for (int u : users) {
    if (rm.mask(u, target_movie) == 0.0) continue;
    Sample smp;
    smp.x = GraphSignal(rm.n_movies(), 1);
    for (int m = 0; m < rm.n_movies(); ++m) smp.x(m, 0) = rm.values(u, m);
    smp.x(target_movie, 0) = 0.0;
    smp.target = Matrix(rm.n_movies(), 1);
    smp.target(target_movie, 0) = rm.values(u, target_movie);
    smp.mask = Matrix(rm.n_movies(), 1);
    smp.mask(target_movie, 0) = 1.0;
    ds.samples.push_back(std::move(smp));
  }
  return ds;
}

struct RecommendationResult {
  double rmse = 0.0;
  OnlineTrace trace;
};

// Offline: RMSE of the fixed model over the test users. Online: predict,
// record the error, then take one centralized gradient step on the revealed
// rating (the prequential protocol).
inline RecommendationResult run_recommendation(const WdGnnParams& model, const Dataset& test,
                                               int target_movie, bool online, double gamma) {
  if (test.samples.empty())
    throw std::invalid_argument("run_recommendation: no test ratings for target");
  RecommendationResult result;
  WdGnnParams params = model;
  double sq_sum = 0.0;
  int t = 0;
  for (const Sample& smp : test.samples) {
    auto [out, cache] = wdgnn_forward(test.graph_of(smp), smp.x, params);
    double pred = out(target_movie, 0);
    double err = pred - smp.target(target_movie, 0);
    sq_sum += err * err;
    TraceRow row;
    row.t = t;
    row.loss = err * err;
    row.metric = std::sqrt(sq_sum / (t + 1));
    row.gamma = online ? gamma : 0.0;
    if (online) {
      auto [loss, upstream] = mse_loss(out, smp.target, smp.mask);
      (void)loss;
      WdGnnGrads g = wdgnn_backward(cache, test.graph_of(smp), params, upstream);
      for (int k = 0; k <= params.wide.k_order(); ++k) {
        if (!all_finite(g.wide[k])) throw std::runtime_error("run_recommendation: non-finite gradient");
        add_scaled(params.wide.taps[k], g.wide[k], -gamma);
      }
    }
    result.trace.push_back(std::move(row));
    ++t;
  }
  result.rmse = std::sqrt(sq_sum / test.samples.size());
  return result;
}

}  // namespace wdgnn

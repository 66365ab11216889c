#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "wdgnn/graph.hpp"
#include "wdgnn/online.hpp"
#include "wdgnn/rng.hpp"
#include "wdgnn/training.hpp"

namespace wdgnn {

// Source localization on an SBM graph: classify the community of the source
// of a diffused signal, read at one detection node per community.
struct SourceLocScenario {
  Gso graph;  // normalized adjacency
  std::vector<int> sources;    // one per community
  std::vector<int> detectors;  // one per community, distinct from the source
  int communities = 5;
  double noise_std = 0.01;
  int max_diffusion_time = 30;
};

inline SourceLocScenario make_sourceloc_scenario(int n, int communities, double p_intra,
                                                 double p_inter, uint64_t seed,
                                                 double noise_std = 0.01,
                                                 int max_diffusion_time = 30) {
  SourceLocScenario sc;
  sc.communities = communities;
  sc.noise_std = noise_std;
  sc.max_diffusion_time = max_diffusion_time;
  sc.graph = normalize_adjacency(sbm_generate(n, communities, p_intra, p_inter, seed));

  Rng rng(Rng::derive(seed, 0x50C));
  int block = n / communities;
  for (int c = 0; c < communities; ++c) {
    int src = c * block + rng.uniform_int(block);
    int det = src;
    while (det == src) det = c * block + rng.uniform_int(block);
    sc.sources.push_back(src);
    sc.detectors.push_back(det);
  }
  return sc;
}

// x = S^t delta_source + gaussian noise
inline GraphSignal diffuse_signal(const Gso& s, int source, int t, double noise_std, Rng& rng) {
  if (source < 0 || source >= s.n()) throw std::invalid_argument("diffuse_signal: source out of range");
  if (t < 0) throw std::invalid_argument("diffuse_signal: negative diffusion time");
  GraphSignal x(s.n(), 1);
  x(source, 0) = 1.0;
  for (int k = 0; k < t; ++k) x = graph_shift(s, x);
  if (noise_std > 0.0)
    for (double& v : x.a) v += rng.normal(0.0, noise_std);
  return x;
}

inline GraphSignal diffuse_signal(const Gso& s, int source, int t, double noise_std, uint64_t seed) {
  Rng rng(seed);
  return diffuse_signal(s, source, t, noise_std, rng);
}

// Uniformly random (source, diffusion time) per sample; the label is the
// source's community index.
inline Dataset gen_sourceloc_dataset(const SourceLocScenario& sc, int n_samples, uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("gen_sourceloc_dataset: n_samples must be >= 1");
  Dataset ds;
  ds.graphs = {sc.graph};
  ds.detectors = sc.detectors;
  ds.num_classes = sc.communities;
  Rng rng(seed);
  for (int i = 0; i < n_samples; ++i) {
    int which = rng.uniform_int(static_cast<int>(sc.sources.size()));
    int t = rng.uniform_int(sc.max_diffusion_time + 1);
    Sample smp;
    smp.x = diffuse_signal(sc.graph, sc.sources[which], t, sc.noise_std, rng);
    smp.label = which;
    ds.samples.push_back(std::move(smp));
  }
  return ds;
}

// Carve a generated pool into train/val/test in order (the pool is i.i.d.).
inline std::vector<Dataset> split_dataset(const Dataset& ds, const std::vector<int>& counts) {
  int total = 0;
  for (int c : counts) total += c;
  if (total > static_cast<int>(ds.samples.size()))
    throw std::invalid_argument("split_dataset: counts exceed pool size");
  std::vector<Dataset> parts;
  int at = 0;
  for (int c : counts) {
    Dataset part;
    part.graphs = ds.graphs;
    part.detectors = ds.detectors;
    part.num_classes = ds.num_classes;
    part.samples.assign(ds.samples.begin() + at, ds.samples.begin() + at + c);
    at += c;
    parts.push_back(std::move(part));
  }
  return parts;
}

// Fraction of (detector, sample) argmax hits, averaged over detectors.
inline double sourceloc_accuracy(const std::vector<Matrix>& detector_logits,
                                 const std::vector<int>& labels) {
  if (detector_logits.size() != labels.size() || detector_logits.empty())
    throw std::invalid_argument("sourceloc_accuracy: need one logit block per label");
  double acc = 0.0;
  for (size_t i = 0; i < detector_logits.size(); ++i) {
    const Matrix& logits = detector_logits[i];
    int hits = 0;
    for (int d = 0; d < logits.rows; ++d) {
      int best = 0;
      for (int c = 1; c < logits.cols; ++c)
        if (logits(d, c) > logits(d, best)) best = c;
      if (best == labels[i]) ++hits;
    }
    acc += static_cast<double>(hits) / logits.rows;
  }
  return acc / detector_logits.size();
}

// Test stream where the signal diffuses over the true graph but the model is
// implemented on a per-step edge-dropped subgraph (p = 0 keeps the graph).
inline std::vector<OnlineStep> make_sourceloc_stream(const SourceLocScenario& sc, int n_steps,
                                                     double drop_probability, uint64_t seed) {
  std::vector<OnlineStep> stream;
  Rng rng(seed);
  for (int t = 0; t < n_steps; ++t) {
    int which = rng.uniform_int(static_cast<int>(sc.sources.size()));
    int td = rng.uniform_int(sc.max_diffusion_time + 1);
    OnlineStep st;
    st.x = diffuse_signal(sc.graph, sc.sources[which], td, sc.noise_std, rng);
    st.s = drop_probability > 0.0 ? drop_edges(sc.graph, drop_probability, rng.next()) : sc.graph;
    st.label = which;
    stream.push_back(std::move(st));
  }
  return stream;
}

// Evaluation set whose per-sample graphs carry fresh edge drops.
inline Dataset perturbed_eval_dataset(const SourceLocScenario& sc, const Dataset& clean,
                                      double drop_probability, uint64_t seed) {
  Dataset out;
  out.detectors = clean.detectors;
  out.num_classes = clean.num_classes;
  Rng rng(seed);
  out.samples = clean.samples;
  out.graphs.reserve(clean.samples.size());
  for (size_t i = 0; i < clean.samples.size(); ++i) {
    out.graphs.push_back(drop_edges(sc.graph, drop_probability, rng.next()));
    out.samples[i].graph_index = static_cast<int>(i);
  }
  return out;
}

}  // namespace wdgnn

#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "autogel/graph.hpp"

namespace autogel {

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto c = line.find(',', start);
    auto tok = line.substr(start, c == std::string::npos ? std::string::npos : c - start);
    const auto b = tok.find_first_not_of(" \t\r");
    const auto e = tok.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : tok.substr(b, e - b + 1));
    if (c == std::string::npos) break;
    start = c + 1;
  }
  return out;
}

inline std::optional<double> parse_double(const std::string& tok) {
  if (tok.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    double v = std::stod(tok, &used);
    if (used != tok.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Node feature CSV: row i holds the features of node i.
inline Tensor load_node_features(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<double> values;
  std::size_t width = 0, rows = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment_or_blank(line)) continue;
    auto cells = detail::split_csv(line);
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw IngestionError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) + " columns");
    }
    for (const auto& c : cells) {
      auto v = detail::parse_double(c);
      if (!v) throw IngestionError(path + ":" + std::to_string(lineno) + ": non-numeric feature '" + c + "'");
      values.push_back(*v);
    }
    ++rows;
  }
  if (rows == 0) throw IngestionError(path + ": no feature rows");
  return Tensor::matrix(rows, width, std::move(values));
}

/// Node label CSV "node_id,label"; a non-numeric first line is treated as a header.
inline std::vector<int> load_node_labels(const std::string& path, std::size_t node_count) {
  auto in = detail::open_input(path);
  std::vector<int> labels(node_count, -1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment_or_blank(line)) continue;
    auto cells = detail::split_csv(line);
    auto id = cells.size() == 2 ? detail::parse_int(cells[0]) : std::nullopt;
    auto lab = cells.size() == 2 ? detail::parse_int(cells[1]) : std::nullopt;
    if (!id || !lab) {
      if (lineno == 1) continue;
      throw IngestionError(path + ":" + std::to_string(lineno) + ": expected \"node_id,label\"");
    }
    if (*id < 0 || static_cast<std::size_t>(*id) >= node_count || *lab < 0) {
      throw IngestionError(path + ":" + std::to_string(lineno) + ": node id or label out of range");
    }
    labels[static_cast<std::size_t>(*id)] = static_cast<int>(*lab);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw IngestionError(path + ": node " + std::to_string(i) + " has no label");
  }
  return labels;
}

/// One-hot degree features, degrees above `cap` clamp to the last slot.
inline Tensor degree_features(const Graph& g, std::size_t cap = 64) {
  std::vector<double> f(g.node_count() * (cap + 1), 0.0);
  for (NodeId v = 0; v < g.node_count(); ++v) f[v * (cap + 1) + std::min(g.degree(v), cap)] = 1.0;
  return Tensor::matrix(g.node_count(), cap + 1, std::move(f));
}

/// Labelled collection of small graphs for graph classification.
struct GraphDataset {
  std::vector<Graph> graphs;  // each carries node features
  std::vector<int> labels;    // dense in [0, class_count)
  std::size_t class_count = 0;
};

/// Reads the TU benchmark layout: <dir>/<NAME>_A.txt, _graph_indicator.txt,
/// _graph_labels.txt and optional _node_labels.txt (one-hot features).
/// Without node labels, degree one-hot features (cap 64) are used.
inline GraphDataset load_tu_dataset(const std::string& dir, std::string name = {}) {
  namespace fs = std::filesystem;
  if (name.empty()) name = fs::path(dir).filename().string();
  if (name.empty()) name = fs::path(dir).parent_path().filename().string();
  auto file = [&](const char* suffix) { return (fs::path(dir) / (name + suffix)).string(); };

  auto read_ints = [](const std::string& path) {
    auto in = detail::open_input(path);
    std::vector<std::vector<long long>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::is_comment_or_blank(line)) continue;
      std::vector<long long> row;
      for (const auto& c : detail::split_csv(line)) {
        auto v = detail::parse_int(c);
        if (!v) throw IngestionError(path + ":" + std::to_string(lineno) + ": expected integers");
        row.push_back(*v);
      }
      rows.push_back(std::move(row));
    }
    return rows;
  };

  const auto indicator = read_ints(file("_graph_indicator.txt"));
  const auto graph_labels = read_ints(file("_graph_labels.txt"));
  const auto adjacency = read_ints(file("_A.txt"));
  std::vector<std::vector<long long>> node_labels;
  if (fs::exists(file("_node_labels.txt"))) node_labels = read_ints(file("_node_labels.txt"));

  const std::size_t graph_count = graph_labels.size();
  if (graph_count == 0) throw IngestionError(name + ": no graphs");
  std::vector<std::size_t> owner(indicator.size()), local(indicator.size()), sizes(graph_count, 0);
  for (std::size_t i = 0; i < indicator.size(); ++i) {
    const auto gid = indicator[i].at(0);
    if (gid < 1 || static_cast<std::size_t>(gid) > graph_count) throw IngestionError(name + ": graph id out of range");
    owner[i] = static_cast<std::size_t>(gid - 1);
    local[i] = sizes[owner[i]]++;
  }
  std::vector<std::vector<Edge>> edges(graph_count);
  for (const auto& row : adjacency) {
    if (row.size() < 2) throw IngestionError(name + ": malformed adjacency row");
    const auto a = static_cast<std::size_t>(row[0] - 1), b = static_cast<std::size_t>(row[1] - 1);
    if (a >= owner.size() || b >= owner.size() || owner[a] != owner[b]) {
      throw IngestionError(name + ": edge crosses graphs or references unknown node");
    }
    edges[owner[a]].push_back({static_cast<NodeId>(local[a]), static_cast<NodeId>(local[b])});
  }

  // dense label ids in sorted order of raw values
  std::map<long long, int> label_ids;
  for (const auto& r : graph_labels) label_ids.emplace(r.at(0), 0);
  int next = 0;
  for (auto& [raw, id] : label_ids) id = next++;
  std::map<long long, std::size_t> node_label_ids;
  for (const auto& r : node_labels) node_label_ids.emplace(r.at(0), 0);
  std::size_t next_node_label = 0;
  for (auto& [raw, id] : node_label_ids) id = next_node_label++;

  GraphDataset ds;
  ds.class_count = label_ids.size();
  std::vector<std::size_t> first(graph_count, 0);
  for (std::size_t i = indicator.size(); i-- > 0;) first[owner[i]] = i;
  for (std::size_t gi = 0; gi < graph_count; ++gi) {
    Graph g(sizes[gi], std::move(edges[gi]));
    if (!node_labels.empty()) {
      const auto width = node_label_ids.size();
      std::vector<double> f(sizes[gi] * width, 0.0);
      for (std::size_t j = 0; j < sizes[gi]; ++j) f[j * width + node_label_ids[node_labels.at(first[gi] + j).at(0)]] = 1.0;
      g.set_features(Tensor::matrix(sizes[gi], width, std::move(f)));
    } else {
      g.set_features(degree_features(g));
    }
    ds.graphs.push_back(std::move(g));
    ds.labels.push_back(label_ids[graph_labels[gi].at(0)]);
  }
  return ds;
}

/// Knowledge graph with its standard train/valid/test triple files
/// (train.txt, valid.txt, test.txt) sharing one vocabulary. Message passing
/// runs over the training triples only.
struct KgDataset {
  Vocabulary entities;
  Vocabulary relations;
  RelGraph graph;
  std::vector<Triple> train, valid, test;
};

inline KgDataset load_kg_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  KgDataset ds;
  ds.train = detail::read_triples((fs::path(dir) / "train.txt").string(), ds.entities, ds.relations);
  ds.valid = detail::read_triples((fs::path(dir) / "valid.txt").string(), ds.entities, ds.relations);
  ds.test = detail::read_triples((fs::path(dir) / "test.txt").string(), ds.entities, ds.relations);
  ds.graph = RelGraph(ds.entities.size(), ds.relations.size(), ds.train);
  return ds;
}

/// All-in-one KG: train = valid = test = every triple (memorization runs).
inline KgDataset kg_from_triples(std::size_t entities, std::size_t relations, std::vector<Triple> triples) {
  KgDataset ds;
  for (std::size_t i = 0; i < entities; ++i) ds.entities.intern("e" + std::to_string(i));
  for (std::size_t i = 0; i < relations; ++i) ds.relations.intern("r" + std::to_string(i));
  ds.train = triples;
  ds.valid = triples;
  ds.test = triples;
  ds.graph = RelGraph(entities, relations, std::move(triples));
  return ds;
}

}  // namespace autogel

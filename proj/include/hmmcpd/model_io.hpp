#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hmmcpd/model.hpp"

namespace hmmcpd {

namespace detail {

inline Eigen::VectorXd json_vector(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::FormatError, std::string(what) + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw Error(ErrorCode::FormatError, std::string(what) + " entries must be numbers");
    v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd json_matrix(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw Error(ErrorCode::FormatError, std::string(what) + " must be a nonempty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw Error(ErrorCode::FormatError, std::string(what) + " rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw Error(ErrorCode::FormatError, std::string(what) + " entries must be numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

inline Density json_density(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("family")) throw Error(ErrorCode::FormatError, "density needs a 'family' field");
  const auto family = j.at("family").get<std::string>();
  if (family == "gaussian") {
    Gaussian g;
    g.mean = j.at("mean").get<double>();
    g.var = j.value("var", 1.0);
    return g;
  }
  if (family == "categorical") {
    Categorical c;
    c.probs = j.at("probs").get<std::vector<double>>();
    return c;
  }
  throw Error(ErrorCode::FormatError, "unknown density family '" + family + "'");
}

}  // namespace detail

/// Parses a model document. Structural problems raise FormatError; the model
/// invariants are then checked by validate() and the first violation thrown.
inline ModelSpec parse_model(const nlohmann::json& doc, bool check = true) {
  try {
    for (const char* key : {"states", "classes", "eta", "trans", "densities"})
      if (!doc.contains(key)) throw Error(ErrorCode::FormatError, std::string("missing section '") + key + "'");
    std::vector<Density> dens;
    for (const auto& d : doc.at("densities")) dens.push_back(detail::json_density(d));
    auto model = make_model(doc.at("states").get<std::vector<std::string>>(), detail::json_vector(doc.at("eta"), "eta"),
                            detail::json_matrix(doc.at("trans"), "trans"), doc.at("classes").get<std::vector<int>>(),
                            std::move(dens));
    if (check) require_valid(model);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, e.what());
  }
}

inline nlohmann::json model_to_json(const ModelSpec& model) {
  nlohmann::json doc;
  doc["states"] = model.states;
  doc["classes"] = model.class_of;
  doc["eta"] = std::vector<double>(model.eta.data(), model.eta.data() + model.eta.size());
  auto& trans = doc["trans"] = nlohmann::json::array();
  for (Eigen::Index r = 0; r < model.trans.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(model.trans.cols()));
    for (Eigen::Index c = 0; c < model.trans.cols(); ++c) row[static_cast<std::size_t>(c)] = model.trans(r, c);
    trans.push_back(row);
  }
  auto& dens = doc["densities"] = nlohmann::json::array();
  for (const auto& d : model.densities) {
    if (const auto* g = std::get_if<Gaussian>(&d))
      dens.push_back({{"family", "gaussian"}, {"mean", g->mean}, {"var", g->var}});
    else
      dens.push_back({{"family", "categorical"}, {"probs", std::get<Categorical>(d).probs}});
  }
  return doc;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FormatError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ModelSpec load_model(const std::string& path, bool check = true) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::FormatError, path + ": " + e.what());
  }
  return parse_model(doc, check);
}

/// Cost document: {"c": [...], "m": 1, "a": [[...]], "rbar": [[...]]} where
/// `a` and `rbar` are |Y| x M (class 1..M in columns). Missing `a` defaults to
/// 1 for every wrong decision.
inline CostSpec parse_costs(const ModelSpec& model, const nlohmann::json& doc) {
  try {
    CostSpec costs = uniform_costs(model, 0.0, doc.value("m", 1));
    costs.c = detail::json_vector(doc.at("c"), "c");
    if (static_cast<std::size_t>(costs.c.size()) != model.size())
      throw Error(ErrorCode::DimensionMismatch, "c must have one entry per state");
    auto widen = [&](const Eigen::MatrixXd& m, const char* what) {
      if (static_cast<std::size_t>(m.rows()) != model.size() || m.cols() != model.num_classes)
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " must be |Y| x M");
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), m.cols() + 1);
      out.rightCols(m.cols()) = m;
      return out;
    };
    if (doc.contains("a")) costs.a = widen(detail::json_matrix(doc.at("a"), "a"), "a");
    if (doc.contains("rbar")) costs.rbar = widen(detail::json_matrix(doc.at("rbar"), "rbar"), "rbar");
    if (costs.m_power < 1) throw Error(ErrorCode::FormatError, "m must be >= 1");
    for (Eigen::Index y = 0; y < costs.c.size(); ++y)
      if (!(costs.c(y) >= 0.0)) throw Error(ErrorCode::NegativeEntry, "delay costs must be nonnegative");
    for (std::size_t y = 0; y < model.size(); ++y)
      for (int i = 1; i <= model.num_classes; ++i) {
        const double a = costs.a(static_cast<Eigen::Index>(y), i);
        if (model.class_of[y] == i && a != 0.0) throw Error(ErrorCode::FormatError, "a(y,i) must be 0 for y in class i");
        if (!(a >= 0.0)) throw Error(ErrorCode::NegativeEntry, "terminal weights must be nonnegative");
      }
    return costs;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, e.what());
  }
}

inline CostSpec load_costs(const ModelSpec& model, const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::FormatError, path + ": " + e.what());
  }
  return parse_costs(model, doc);
}

}  // namespace hmmcpd

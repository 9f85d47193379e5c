#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "segfit/linalg.hpp"
#include "segfit/model.hpp"

namespace segfit {

/// Serialized fit. Schema (version 1):
///
///   {
///     "schema_version": 1,
///     "algorithm": "dp" | "greedy" | "bucket" | "bucket-post",
///     "config": { ...flags echoed... },
///     "n": rows, "d": features, "partition_col": column,
///     "breakpoints": [0, b_1, ..., n],      // sorted-row indices
///     "cut_values": [v_1, ..., v_{m-1}],    // partition column at row b_l
///     "pieces": [{"begin", "end", "theta": [...], "sse"}],
///     "total_sse": number,
///     "warnings": [string]
///   }
struct ModelDocument {
  int schema_version = 1;
  std::string algorithm;
  nlohmann::json config = nlohmann::json::object();
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t partition_col = 0;
  PiecewiseLinearModel model;
  std::vector<double> cut_values;
  std::vector<double> piece_sse;
  double total_sse = 0.0;
  std::vector<std::string> warnings;
};

inline constexpr int kModelSchemaVersion = 1;

inline ModelDocument make_document(const DataSet& ds, const FitReport& report, std::string algorithm,
                                   nlohmann::json config) {
  const auto& part = report.model.partition();
  std::vector<double> cuts;
  for (std::size_t b : part.interior()) cuts.push_back(ds.partition_value(b));
  std::vector<double> piece_sse;
  for (std::size_t p = 0; p < part.piece_count(); ++p)
    piece_sse.push_back(residual_sse(ds, part.interval(p), report.model.thetas()[p]));
  return ModelDocument{kModelSchemaVersion, std::move(algorithm), std::move(config), ds.size(), ds.dim(),
                       ds.partition_col(), report.model, std::move(cuts), std::move(piece_sse), report.sse,
                       report.warnings};
}

inline nlohmann::json to_json(const ModelDocument& doc) {
  nlohmann::json pieces = nlohmann::json::array();
  const auto& part = doc.model.partition();
  for (std::size_t p = 0; p < part.piece_count(); ++p) {
    const auto iv = part.interval(p);
    pieces.push_back({{"begin", iv.begin},
                      {"end", iv.end},
                      {"theta", doc.model.thetas()[p]},
                      {"sse", p < doc.piece_sse.size() ? doc.piece_sse[p] : 0.0}});
  }
  nlohmann::json j;
  j["schema_version"] = doc.schema_version;
  j["algorithm"] = doc.algorithm;
  j["config"] = doc.config;
  j["n"] = doc.n;
  j["d"] = doc.d;
  j["partition_col"] = doc.partition_col;
  j["breakpoints"] = part.bounds();
  j["cut_values"] = doc.cut_values;
  j["pieces"] = std::move(pieces);
  j["total_sse"] = doc.total_sse;
  j["warnings"] = doc.warnings;
  return j;
}

inline std::string dump_document(const ModelDocument& doc) { return to_json(doc).dump(2) + "\n"; }

/// Throws StructuralError on schema violations.
inline ModelDocument parse_model_document(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kModelSchemaVersion)
      throw StructuralError("unsupported model schema version");
    auto bounds = j.at("breakpoints").get<std::vector<std::size_t>>();
    std::vector<std::vector<double>> thetas;
    std::vector<double> piece_sse;
    const auto& pieces = j.at("pieces");
    if (pieces.size() + 1 != bounds.size()) throw StructuralError("piece count does not match breakpoints");
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      if (pieces[p].at("begin").get<std::size_t>() != bounds[p] || pieces[p].at("end").get<std::size_t>() != bounds[p + 1])
        throw StructuralError("piece bounds disagree with breakpoints");
      thetas.push_back(pieces[p].at("theta").get<std::vector<double>>());
      piece_sse.push_back(pieces[p].at("sse").get<double>());
    }
    ModelDocument doc{kModelSchemaVersion,
                      j.at("algorithm").get<std::string>(),
                      j.value("config", nlohmann::json::object()),
                      j.at("n").get<std::size_t>(),
                      j.at("d").get<std::size_t>(),
                      j.at("partition_col").get<std::size_t>(),
                      PiecewiseLinearModel(Partition(std::move(bounds)), std::move(thetas)),
                      j.at("cut_values").get<std::vector<double>>(),
                      std::move(piece_sse),
                      j.at("total_sse").get<double>(),
                      j.value("warnings", std::vector<std::string>{})};
    if (doc.model.partition().n() != doc.n || doc.model.dim() != doc.d)
      throw StructuralError("model shape disagrees with n/d");
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(std::string("malformed model document: ") + e.what());
  }
}

inline ModelDocument parse_model_document(const std::string& text) {
  try {
    return parse_model_document(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(std::string("malformed model document: ") + e.what());
  }
}

}  // namespace segfit

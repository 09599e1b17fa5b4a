// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "branchforge/errors.hpp"
#include "branchforge/milp.hpp"

namespace branchforge {

inline constexpr int kInstanceSchemaVersion = 1;

namespace detail {

inline RowSense parse_sense(const std::string& s, std::size_t row) {
  if (s == "LE") return RowSense::LE;
  if (s == "GE") return RowSense::GE;
  if (s == "EQ") return RowSense::EQ;
  throw ParseError("field 'sense', row " + std::to_string(row) + ": unknown value '" + s +
                   "' (expected LE, GE or EQ)");
}

}  // namespace detail

/// Serializes an instance to the versioned JSON schema. nlohmann emits the
/// shortest decimal text that round-trips each double exactly, so write/read
/// is lossless and byte-stable.
inline void write_instance(const MilpInstance& m, const std::string& path) {
  nlohmann::ordered_json j;
  j["version"] = kInstanceSchemaVersion;
  j["name"] = m.name;
  j["n_vars"] = m.n_vars;
  j["obj"] = m.obj;
  j["lb"] = m.var_lb;
  j["ub"] = m.var_ub;
  nlohmann::ordered_json integer = nlohmann::ordered_json::array();
  for (std::uint8_t b : m.is_integer) integer.push_back(b != 0);
  j["integer"] = std::move(integer);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : m.rows) {
    nlohmann::ordered_json r = nlohmann::ordered_json::array();
    for (const RowEntry& e : row) r.push_back({e.var, e.coef});
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  nlohmann::ordered_json sense = nlohmann::ordered_json::array();
  for (RowSense s : m.sense) sense.push_back(to_string(s));
  j["sense"] = std::move(sense);
  j["rhs"] = m.rhs;
  j["sign_flip"] = m.sign_flip;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump() << '\n';
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline MilpInstance read_instance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("instance file '") + path + "': " + e.what());
  }

  try {
    if (!j.contains("version")) throw ParseError("field 'version' missing");
    const int version = j.at("version").get<int>();
    if (version != kInstanceSchemaVersion)
      throw SchemaVersionMismatch("instance schema version " + std::to_string(version) +
                                  " (expected " + std::to_string(kInstanceSchemaVersion) + ")");
    MilpInstance m;
    m.name = j.value("name", std::string{});
    m.n_vars = j.at("n_vars").get<int>();
    m.obj = j.at("obj").get<std::vector<double>>();
    m.var_lb = j.at("lb").get<std::vector<double>>();
    m.var_ub = j.at("ub").get<std::vector<double>>();
    for (const auto& b : j.at("integer")) m.is_integer.push_back(b.get<bool>() ? 1 : 0);
    std::size_t row_idx = 0;
    for (const auto& row : j.at("rows")) {
      std::vector<RowEntry> entries;
      for (const auto& e : row) {
        if (!e.is_array() || e.size() != 2)
          throw ParseError("field 'rows', row " + std::to_string(row_idx) +
                           ": entries must be [var_index, coefficient] pairs");
        entries.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
      }
      m.rows.push_back(std::move(entries));
      ++row_idx;
    }
    std::size_t sense_idx = 0;
    for (const auto& s : j.at("sense"))
      m.sense.push_back(detail::parse_sense(s.get<std::string>(), sense_idx++));
    m.rhs = j.at("rhs").get<std::vector<double>>();
    m.sign_flip = j.value("sign_flip", false);
    m.n_cons = static_cast<int>(m.rows.size());
    try {
      validate_instance(m);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      // Content problems surface as parse errors on the read path.
      throw ParseError(std::string("instance file '") + path + "': " + e.what());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("instance file '") + path + "': " + e.what());
  }
}

}  // namespace branchforge

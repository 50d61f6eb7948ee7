// SPDX-License-Identifier: Apache-2.0
#include "stochimp/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace stochimp {

std::string format_double(double value) {
  if (!std::isfinite(value)) return "null";
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

namespace {

void dump_value(const Json& value, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent) * depth, ' ');
  const std::string pad_in(static_cast<std::size_t>(indent) * (depth + 1), ' ');
  switch (value.type()) {
    case Json::value_t::object: {
      if (value.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      std::size_t i = 0;
      for (auto it = value.begin(); it != value.end(); ++it, ++i) {
        out += pad_in;
        out += Json(it.key()).dump();
        out += ": ";
        dump_value(it.value(), out, indent, depth + 1);
        if (i + 1 < value.size()) out += ",";
        out += "\n";
      }
      out += pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (value.empty()) {
        out += "[]";
        return;
      }
      bool scalars_only = true;
      for (const auto& item : value)
        if (item.is_structured()) scalars_only = false;
      if (scalars_only) {
        out += "[";
        for (std::size_t i = 0; i < value.size(); ++i) {
          dump_value(value[i], out, indent, depth + 1);
          if (i + 1 < value.size()) out += ", ";
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < value.size(); ++i) {
        out += pad_in;
        dump_value(value[i], out, indent, depth + 1);
        if (i + 1 < value.size()) out += ",";
        out += "\n";
      }
      out += pad + "]";
      return;
    }
    case Json::value_t::number_float:
      out += format_double(value.get<double>());
      return;
    default:
      out += value.dump();
      return;
  }
}

}  // namespace

std::string dump_json(const Json& doc, int indent) {
  std::string out;
  dump_value(doc, out, indent, 0);
  out += "\n";
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream stream(path, std::ios::binary);
  require(stream.good(), "E_PRECONDITION", "cannot open '" + path + "' for writing");
  stream << content;
}

std::string read_text_file(const std::string& path) {
  std::ifstream stream(path, std::ios::binary);
  require(stream.good(), "E_PRECONDITION", "cannot open '" + path + "' for reading");
  std::ostringstream buffer;
  buffer << stream.rdbuf();
  return buffer.str();
}

Json to_json(const SpectralModel& model, const ObservationGram& gram) {
  Json doc;
  doc["J"] = model.dim;
  doc["lambda"] = Json::array();
  for (Index j = 0; j < model.dim; ++j) doc["lambda"].push_back(model.eigenvalues[j]);
  doc["G"] = Json::array();
  for (const auto& [a, b] : gram.intervals) doc["G"].push_back(Json::array({a, b}));
  doc["gram"] = Json::array();
  for (Index i = 0; i < gram.matrix.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < gram.matrix.cols(); ++j) row.push_back(gram.matrix(i, j));
    doc["gram"].push_back(std::move(row));
  }
  return doc;
}

Json to_json(const AdaptedField& field) {
  Json doc;
  doc["level"] = field.level;
  doc["J"] = field.num_modes();
  doc["values"] = Json::array();
  for (Index n = 0; n < field.num_nodes(); ++n) {
    Json row = Json::array();
    for (Index j = 0; j < field.num_modes(); ++j) row.push_back(field.values(n, j));
    doc["values"].push_back(std::move(row));
  }
  return doc;
}

AdaptedField field_from_json(const Json& doc) {
  const int level = doc.at("level").get<int>();
  const Index modes = doc.at("J").get<Index>();
  const auto& rows = doc.at("values");
  Matrix values(static_cast<Index>(rows.size()), modes);
  for (Index n = 0; n < values.rows(); ++n)
    for (Index j = 0; j < modes; ++j) values(n, j) = rows[n][j].get<double>();
  return make_field(level, std::move(values));
}

std::string to_csv(const AdaptedField& field) {
  std::string out = "node_index,coeff_index,value\n";
  for (Index n = 0; n < field.num_nodes(); ++n)
    for (Index j = 0; j < field.num_modes(); ++j) {
      out += std::to_string(n);
      out += ",";
      out += std::to_string(j);
      out += ",";
      out += format_double(field.values(n, j));
      out += "\n";
    }
  return out;
}

std::string trajectory_csv(const ForwardTrajectory& trajectory) {
  std::string out = "level,node,coeff,value\n";
  for (const AdaptedField& field : trajectory.states)
    for (Index n = 0; n < field.num_nodes(); ++n)
      for (Index j = 0; j < field.num_modes(); ++j) {
        out += std::to_string(field.level);
        out += ",";
        out += std::to_string(n);
        out += ",";
        out += std::to_string(j);
        out += ",";
        out += format_double(field.values(n, j));
        out += "\n";
      }
  return out;
}

Json to_json(const DualityReport& report) {
  Json doc;
  doc["lhs"] = report.lhs;
  doc["rhs"] = report.rhs;
  doc["residual"] = report.residual;
  doc["convention"] = to_string(report.convention);
  doc["state_term"] = report.state_term;
  doc["terminal_term"] = report.terminal_term;
  doc["control_term"] = report.control_term;
  return doc;
}

}  // namespace stochimp

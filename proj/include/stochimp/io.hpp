// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <json.hpp>

#include "stochimp/dynamics.hpp"
#include "stochimp/spectral.hpp"
#include "stochimp/tree.hpp"

namespace stochimp {

using Json = nlohmann::ordered_json;

/// Serializes with every floating-point number printed to 17 significant
/// digits (lossless round trip, diff-friendly). Non-finite values become null.
std::string dump_json(const Json& doc, int indent = 2);

std::string format_double(double value);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

Json to_json(const SpectralModel& model, const ObservationGram& gram);
Json to_json(const AdaptedField& field);
AdaptedField field_from_json(const Json& doc);

/// CSV with columns node_index,coeff_index,value.
std::string to_csv(const AdaptedField& field);
/// CSV with columns level,node,coeff,value over all stored levels.
std::string trajectory_csv(const ForwardTrajectory& trajectory);

Json to_json(const DualityReport& report);

}  // namespace stochimp

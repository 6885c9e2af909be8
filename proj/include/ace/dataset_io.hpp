#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "ace/estimands.hpp"
#include "ace/scm.hpp"

namespace ace {

// CSV with a header encoding role tags as "role:name" (e.g. "treatment:t",
// "covariate:x0"). Values print with enough digits to round-trip exactly.
void write_observed_csv(std::ostream& os, const ObservedDataset& dataset);
void write_full_csv(std::ostream& os, const FullTable& table);
ObservedDataset read_observed_csv(std::istream& is);
FullTable read_full_csv(std::istream& is);

void save_observed_csv(const std::string& path, const ObservedDataset& dataset);
ObservedDataset load_observed_csv(const std::string& path);

// Family specs as structured text (nested key/value sections).
nlohmann::json family_to_json(const ScmFamily& family);
ScmFamily family_from_json(const nlohmann::json& j);

nlohmann::json effect_target_to_json(const EffectTarget& target);
EffectTarget effect_target_from_json(const nlohmann::json& j);

std::string format_double(double v);

}  // namespace ace

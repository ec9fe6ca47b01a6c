#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adgan/features.hpp"

namespace adgan {

// One consumer with whatever information the two domains supply. Membership
// in E_f means a survey is present; consumers with activity only form E_l.
struct LabeledConsumer {
  std::string id;
  std::array<double, 20> u{};
  std::optional<std::array<int, kSurveyQuestions>> survey;
  int label = -1;  // -1 when unknown
  bool zero_stratum = false;

  bool paired() const { return survey.has_value(); }
  bool labeled() const { return label >= 0; }
};

struct Dataset {
  std::vector<LabeledConsumer> consumers;  // ordered by consumer id
  // Surveyed consumers with no activity record; unusable for the model and
  // surfaced as a data-quality warning.
  std::vector<std::string> survey_without_activity;

  std::vector<int> paired_indices() const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(consumers.size()); ++i)
      if (consumers[static_cast<std::size_t>(i)].paired() &&
          consumers[static_cast<std::size_t>(i)].labeled())
        out.push_back(i);
    return out;
  }

  std::vector<int> unpaired_indices() const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(consumers.size()); ++i)
      if (!consumers[static_cast<std::size_t>(i)].paired() &&
          consumers[static_cast<std::size_t>(i)].labeled())
        out.push_back(i);
    return out;
  }
};

inline Dataset assemble_dataset(const FeatureExtraction& features,
                                const std::vector<SurveyRow>& surveys) {
  std::map<std::string, const SurveyRow*> by_id;
  for (const auto& row : surveys) {
    if (by_id.count(row.consumer_id))
      throw ValidationError("duplicate survey row for consumer " + row.consumer_id);
    by_id[row.consumer_id] = &row;
  }
  Dataset ds;
  for (const auto& v : features.vectors) {
    LabeledConsumer c;
    c.id = v.consumer_id;
    c.u = v.combined();
    c.zero_stratum = v.zero_stratum;
    auto it = by_id.find(v.consumer_id);
    if (it != by_id.end()) {
      c.survey = it->second->answers;
      if (it->second->label) c.label = *it->second->label;
      by_id.erase(it);
    }
    ds.consumers.push_back(std::move(c));
  }
  for (const auto& [id, row] : by_id)
    if (row->answers) ds.survey_without_activity.push_back(id);
  return ds;
}

}  // namespace adgan

#include "cxrl/errors.hpp"
#include "cxrl/evalsuite.hpp"

namespace cxrl::evalsuite {

InferenceResult run_inference(const std::vector<corpus::StudyRecord>& records, judge::Generator& backend,
                              const InferenceOptions& options) {
  const auto priors = corpus::link_prior_all(records);
  const auto encounters = corpus::encounter_index_all(records);
  std::map<std::string, const corpus::StudyRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.study_id, &r);

  InferenceResult result;
  judge::GenerationOptions gen;
  gen.temperature = 0.0;
  gen.max_tokens = options.max_tokens;

  for (const auto& record : records) {
    corpus::StudyRecord keyed = record;
    keyed.images.clear();
    if (auto key = corpus::key_image(record)) {
      keyed.images.push_back(*key);
    } else if (!record.images.empty()) {
      keyed.images.push_back(record.images.front());  // lateral-only study
    }

    EvalPair pair;
    pair.study_id = record.study_id;
    pair.reference = corpus::target_text(record.sections);
    pair.encounter_index = encounters.at(record.study_id);
    pair.demographics = record.demographics;

    std::optional<corpus::PriorContext> prior;
    if (const auto& prior_id = priors.at(record.study_id)) {
      const corpus::StudyRecord& prior_record = *by_id.at(*prior_id);
      pair.prior_reference = corpus::target_text(prior_record.sections);
      if (options.use_prior) prior = corpus::make_prior_context(prior_record);
    }
    const auto prompt = corpus::build_prompt(keyed, prior);

    try {
      const auto out = judge::generate(prompt, gen, backend);
      pair.prediction = out.text;
      pair.truncated = out.truncated;
    } catch (const ServiceError& e) {
      result.complete = false;
      result.error = record.study_id + ": " + e.what();
      break;
    }
    result.prompts.push_back(prompt.text);
    result.pairs.push_back(std::move(pair));
  }
  return result;
}

BaselineResult copy_prior_baseline(const std::vector<corpus::StudyRecord>& records) {
  const auto priors = corpus::link_prior_all(records);
  const auto encounters = corpus::encounter_index_all(records);
  std::map<std::string, const corpus::StudyRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.study_id, &r);

  BaselineResult out;
  for (const auto& record : records) {
    const auto& prior_id = priors.at(record.study_id);
    if (!prior_id) {
      ++out.excluded;
      continue;
    }
    EvalPair pair;
    pair.study_id = record.study_id;
    pair.reference = corpus::target_text(record.sections);
    pair.prior_reference = corpus::target_text(by_id.at(*prior_id)->sections);
    pair.prediction = *pair.prior_reference;
    pair.encounter_index = encounters.at(record.study_id);
    pair.demographics = record.demographics;
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

}  // namespace cxrl::evalsuite

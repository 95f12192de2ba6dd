#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "cxrl/errors.hpp"
#include "cxrl/metrics.hpp"

namespace cxrl::metrics {

using ojson = nlohmann::ordered_json;

CompositeCoefficients CompositeCoefficients::from_json(const ojson& j) {
  CompositeCoefficients c;
  try {
    c.w_bleu = j.value("w_bleu", c.w_bleu);
    c.w_soft = j.value("w_soft", c.w_soft);
    c.w_semb = j.value("w_semb", c.w_semb);
    c.w_radgraph = j.value("w_radgraph", c.w_radgraph);
    c.intercept = j.value("intercept", c.intercept);
    c.reciprocal_reporting = j.value("reciprocal", c.reciprocal_reporting);
  } catch (const ojson::exception& e) {
    throw DataError(std::string("bad composite coefficients: ") + e.what());
  }
  if (c.w_bleu == 0.0 && c.w_soft == 0.0 && c.w_semb == 0.0 && c.w_radgraph == 0.0) {
    throw DataError("composite coefficients: at least one weight must be non-zero");
  }
  return c;
}

CompositeCoefficients CompositeCoefficients::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return from_json(ojson::parse(in));
  } catch (const ojson::exception& e) {
    throw DataError("malformed JSON in '" + path + "': " + e.what());
  }
}

ojson CompositeCoefficients::to_json() const {
  return {{"w_bleu", w_bleu},         {"w_soft", w_soft},       {"w_semb", w_semb},
          {"w_radgraph", w_radgraph}, {"intercept", intercept}, {"reciprocal", reciprocal_reporting}};
}

double composite_raw(const MetricVector& mv, const CompositeCoefficients& c) {
  return c.intercept + c.w_bleu * mv.bleu2 + c.w_soft * mv.soft_f1 + c.w_semb * mv.semb + c.w_radgraph * mv.radgraph_f1;
}

double report_composite(double raw, const CompositeCoefficients& c) {
  if (!c.reciprocal_reporting) return raw;
  if (!(raw > 0.0)) throw std::domain_error("reciprocal reporting of a non-positive composite (" + std::to_string(raw) + ")");
  return 1.0 / raw;
}

CompositeScore composite(const MetricVector& mv, const CompositeCoefficients& coeffs) {
  const double raw = composite_raw(mv, coeffs);
  return {raw, report_composite(raw, coeffs)};
}

}  // namespace cxrl::metrics

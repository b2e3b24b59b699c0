#pragma once

#include <string>

#include "dgsct/config.hpp"
#include "dgsct/train.hpp"

namespace dgsct {

/// Attention dump for one forward pass. Keys and nesting are stable:
/// {"config": {...}, "layers": [{"layer": n, "m_vc": [[...]], "m_ac": [[...]],
/// "m_vs": [[...]], "m_af": [[...]], "g_v": [...] | null, "g_a": [...] | null,
/// "factors_v": [[[...]]], "factors_a": [[[...]]]}]}. Reals carry 17
/// significant digits; reruns with one seed are byte-identical.
std::string render_attention_dump(const RunConfig& cfg, const StackOutput& out);

/// Builds the model, runs one synthetic pair through it and renders the dump.
std::string run_demo_dump(const RunConfig& cfg);

/// Metrics CSV: header `ablation,steps,final_loss,accuracy`, LF endings.
std::string render_metrics_csv(const std::string& ablation, int steps, double final_loss,
                               double accuracy);

std::string render_params_report(const ParamCounts& counts);

std::string render_gradcheck_report(const GradCheckReport& report);

/// Writes the whole string in one operation; throws IoError on failure.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace dgsct

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bh {

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    std::vector<std::string> details;  // deterministic text only, no timings
};

/// Criteria 1 to 13 with their problem sizes and tolerances fixed here. Criterion 14
/// (repeatability of the whole run) is checked by running this twice from outside.
std::vector<CriterionResult> run_acceptance(std::ostream* progress = nullptr);

void write_acceptance_report(std::ostream& os, const std::vector<CriterionResult>& results);

}  // namespace bh

#pragma once

#include <ostream>
#include <string>
#include <vector>

// The acceptance battery: one function per criterion, each returning a
// pass/fail verdict with a one-line diagnostic. Shared by the CLI `suite`
// subcommand and the acceptance test binary.
namespace copkit {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
};

// Runs all criteria in order; scratch files go under out_dir.
std::vector<CriterionResult> run_acceptance_criteria(const std::string& out_dir);

// Prints one line per criterion; returns true iff all pass.
bool run_acceptance(std::ostream& os, const std::string& out_dir);

}  // namespace copkit

#pragma once

#include <string>
#include <vector>

namespace starfl {

struct Check {
  std::string suite;
  std::string name;
  int criterion = 0;  // acceptance criterion number, 0 when auxiliary
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  bool timing = false;  // measured is a wall-clock time; left out of the CSV report
};

struct VerifyOptions {
  int alternating_seeds = 20;
  int ordering_seeds = 10;
  int rate_seeds = 3;
  int threads = 1;
};

const std::vector<std::string>& verify_suite_names();

// Throws std::invalid_argument listing the valid names for an unknown suite.
std::vector<Check> run_suite(const std::string& suite, const VerifyOptions& opt = {});

// Individual criteria, also used by the acceptance binary.
std::vector<Check> check_lifting_identities();      // 1
std::vector<Check> check_gradients();               // 2
std::vector<Check> check_bound_dominance();         // 3
std::vector<Check> check_one_round_bound();         // 4
std::vector<Check> check_diminishing_rate();        // 5
std::vector<Check> check_mse_formula();             // 6
std::vector<Check> check_penalty_sdr(int threads);  // 7
std::vector<Check> check_alternating_monotone(const VerifyOptions& opt);  // 8
std::vector<Check> check_scheme_ordering(const VerifyOptions& opt);       // 9
std::vector<Check> check_rate_trends(const VerifyOptions& opt);           // 10
std::vector<Check> check_solver_kernels();                                // 11
std::vector<Check> check_determinism();                                   // 12

// Report with measured values, tolerances, verdicts and timings.
std::string report_json(const std::vector<Check>& checks);
// Same checks without timings (wall-clock measurements are blanked), so
// repeated executions compare byte for byte.
std::string report_csv(const std::vector<Check>& checks);

}  // namespace starfl

// Acceptance gate: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exits nonzero on any failure.
#include "mimowf/acceptance.hpp"

int main() {
  const auto results = mimowf::acceptance::run_all();
  return mimowf::acceptance::report(results);
}

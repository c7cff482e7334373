#pragma once

#include <functional>
#include <span>

namespace fbopt {

// Worker count used by row-parallel loops. 1 (the default) runs inline.
void set_thread_count(int n);
int thread_count();

// Calls body(row) for every row in [0, rows). Rows are split into contiguous
// blocks; the body must only write data owned by its row.
void for_each_row(int rows, const std::function<void(int)>& body);

// Sums row partials in row order, so the result does not depend on the
// worker count.
double ordered_sum(std::span<const double> partials);

}  // namespace fbopt

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>
#include <vector>

#include "msd/weighting.hpp"

namespace msd {

inline GridSearchResult grid_search_population(
    const PopulationGrid& grid,
    const std::function<double(double, double, double)>& train_and_eval, int jobs) {
  validate(grid);
  // Cells are laid out in lexicographic order of (w, w_v, w_t) so that the
  // first maximum found is the lexicographically smallest tie.
  const auto sorted = [](std::vector<double> axis) {
    std::sort(axis.begin(), axis.end());
    axis.erase(std::unique(axis.begin(), axis.end()), axis.end());
    return axis;
  };
  const std::vector<double> ws = sorted(grid.w), wvs = sorted(grid.w_v), wts = sorted(grid.w_t);
  GridSearchResult result;
  for (double w : ws)
    for (double wv : wvs)
      for (double wt : wts) result.table.push_back(GridCellResult{w, wv, wt});

  const auto run_cell = [&](GridCellResult& cell) {
    try {
      cell.metric = train_and_eval(cell.w, cell.w_v, cell.w_t);
    } catch (const std::exception& e) {
      cell.metric = std::numeric_limits<double>::quiet_NaN();
      cell.error = e.what();
    }
  };

  if (jobs <= 1 || result.table.size() <= 1) {
    for (GridCellResult& cell : result.table) run_cell(cell);
  } else {
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= result.table.size()) return;
        run_cell(result.table[i]);
      }
    };
    std::vector<std::thread> pool;
    const int n = std::min<int>(jobs, static_cast<int>(result.table.size()));
    pool.reserve(n);
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  bool found = false;
  for (const GridCellResult& cell : result.table) {
    if (!cell.error.empty() || !std::isfinite(cell.metric)) continue;
    if (!found || cell.metric > result.best_metric) {
      found = true;
      result.best = {cell.w, cell.w_v, cell.w_t};
      result.best_metric = cell.metric;
    }
  }
  if (!found) throw NumericError("every grid cell failed");
  return result;
}

}  // namespace msd

#pragma once

// Small plumbing shared by the modules: CSV text, atomic writes, a
// diagnostics sink and a static-chunk parallel loop.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace credsurr {

// Diagnostics (ESS warnings, clamped inputs, dropped columns). Default sink
// writes to stderr; tests swap it out.
using DiagnosticSink = std::function<void(const std::string&)>;
void set_diagnostic_sink(DiagnosticSink sink);
void diagnostic(const std::string& msg);

// 17 significant digits, round-trips every double.
std::string format_double(double v);
double parse_double(std::string_view s);

std::string csv_quote(std::string_view field);
std::string csv_join(const std::vector<std::string>& fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based source line of each row, for error messages
  std::vector<std::size_t> lines;

  // -1 when absent
  int column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text, const std::string& source);
CsvTable read_csv(const std::string& path);

std::string read_file(const std::string& path);
// temp file + rename
void write_file_atomic(const std::string& path, std::string_view content);

// Runs body(i) for i in [0, n) over at most `threads` workers with fixed
// contiguous chunks. The first exception is rethrown after all workers join.
template <typename Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads > 0 ? threads : 1, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
    });
  }
  pool.clear();
  if (first) std::rethrow_exception(first);
}

}  // namespace credsurr

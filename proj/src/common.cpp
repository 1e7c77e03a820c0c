#include "hoi/common.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <thread>
#include <vector>

#include "hoi/parallel.hpp"

namespace hoi {

namespace {
std::atomic<bool> g_quiet{false};
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::AngleNearPi: return "AngleNearPi";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::FrameMismatch: return "FrameMismatch";
    case ErrorCode::UnsortedSamples: return "UnsortedSamples";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::NoSurface: return "NoSurface";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::FrameMismatch:
    case ErrorCode::IoFailure:
    case ErrorCode::ParseError:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::EmptyInput:
      return true;
    default:
      return false;
  }
}

void set_log_quiet(bool quiet) { g_quiet = quiet; }

void log_warning(std::string_view msg) {
  if (!g_quiet) std::cerr << "[warn] " << msg << '\n';
}

void log_info(std::string_view msg) {
  if (!g_quiet) std::cerr << "[info] " << msg << '\n';
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace hoi

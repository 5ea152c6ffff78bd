#include "emovec/log.hpp"

#include <cstdio>
#include <mutex>
#include <string>
#include <utility>

namespace emovec {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& current_sink() {
  static LogSink sink;
  return sink;
}

void emit(LogLevel level, std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (current_sink()) {
    current_sink()(level, message);
    return;
  }
  const char* tag = level == LogLevel::warn ? "warn" : "info";
  std::fprintf(stderr, "[emovec] %s: %.*s\n", tag, static_cast<int>(message.size()), message.data());
}

}  // namespace

void set_log_sink(LogSink sink) {
  std::lock_guard lock(sink_mutex());
  current_sink() = std::move(sink);
}

void log_info(std::string_view message) { emit(LogLevel::info, message); }
void log_warn(std::string_view message) { emit(LogLevel::warn, message); }

ScopedLogSink::ScopedLogSink(LogSink sink) {
  std::lock_guard lock(sink_mutex());
  previous_ = std::exchange(current_sink(), std::move(sink));
}

ScopedLogSink::~ScopedLogSink() {
  std::lock_guard lock(sink_mutex());
  current_sink() = std::move(previous_);
}

}  // namespace emovec

#pragma once

#include <functional>
#include <string_view>

namespace emovec {

enum class LogLevel { info, warn };

using LogSink = std::function<void(LogLevel, std::string_view)>;

// Replaces the process-wide sink. Passing an empty function restores the
// default, which writes to stderr.
void set_log_sink(LogSink sink);

void log_info(std::string_view message);
void log_warn(std::string_view message);

// Installs a sink for the lifetime of the guard; used by tests to capture
// warnings.
class ScopedLogSink {
 public:
  explicit ScopedLogSink(LogSink sink);
  ~ScopedLogSink();
  ScopedLogSink(const ScopedLogSink&) = delete;
  ScopedLogSink& operator=(const ScopedLogSink&) = delete;

 private:
  LogSink previous_;
};

}  // namespace emovec

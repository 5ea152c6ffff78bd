#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "emovec/log.hpp"

int main(int argc, char** argv) {
  // Library warnings are expected in many tests; those that assert on them
  // install their own sink.
  emovec::set_log_sink([](emovec::LogLevel, std::string_view) {});
  doctest::Context context(argc, argv);
  return context.run();
}

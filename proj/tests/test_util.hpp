#pragma once

#include <cstdlib>
#include <string>

#ifndef CNNMA_DEFAULT_DATA_DIR
#define CNNMA_DEFAULT_DATA_DIR "data/mnist"
#endif

namespace cnnma::testutil {

inline std::string data_dir() {
  if (const char* env = std::getenv("CNNMA_DATA_DIR")) return env;
  return CNNMA_DEFAULT_DATA_DIR;
}

inline bool run_slow_tests() { return std::getenv("CNNMA_RUN_SLOW") != nullptr; }

}  // namespace cnnma::testutil

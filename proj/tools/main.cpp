#include <vector>

#include "ebgmrf/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ebgmrf::run_cli(args);
}

#include <string>
#include <vector>

#include "framecast/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return framecast::run_cli(args);
}

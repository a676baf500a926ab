#include <iostream>
#include <string>
#include <vector>

#include "mopid/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return mopid::run_cli(args, std::cout, std::cerr);
}

#include <iostream>
#include <string>
#include <vector>

#include "sgn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sgn::run_cli(args, std::cout, std::cerr);
}

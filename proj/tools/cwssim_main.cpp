#include <iostream>
#include <string>
#include <vector>

#include "cwssim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cwssim::run_cli(args, std::cout, std::cerr);
}

#include <iostream>
#include <string>
#include <vector>

#include "mirrorfdr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return mirrorfdr::run_cli(args, std::cout, std::cerr);
}

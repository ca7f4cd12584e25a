#include <iostream>
#include <string>
#include <vector>

#include "maq2l/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return maq2l::run_cli(args, std::cout, std::cerr);
}

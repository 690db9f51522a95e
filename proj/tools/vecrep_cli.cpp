#include <iostream>
#include <string>
#include <vector>

#include "vecrep/harness.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return vecrep::harness::cli(args, std::cout, std::cerr);
}

#include <iostream>
#include <string>
#include <vector>

#include "penex/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return penex::cli::run(args, std::cout, std::cerr);
}

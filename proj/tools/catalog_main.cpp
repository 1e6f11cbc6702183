#include <iostream>

#include "catalog/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return catalog::cli::run(args, std::cout, std::cerr);
}

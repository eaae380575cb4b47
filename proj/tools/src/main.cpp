#include <iostream>
#include <string>
#include <vector>

#include "mvqa_tools/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mvqa::cli::run(args, std::cout, std::cerr);
}

#include <iostream>
#include <string>
#include <vector>

#include "sofuse/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return sofuse::cli::run(args, std::cout, std::cerr);
}

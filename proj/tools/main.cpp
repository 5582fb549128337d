#include <iostream>
#include <string>
#include <vector>

#include "transport/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return transport::run_cli(args, std::cout, std::cerr);
}

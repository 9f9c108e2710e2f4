#include <iostream>
#include <string>
#include <vector>

#include "sdlyap/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sdlyap::run_cli(std::move(args), std::cout, std::cerr);
}

#include <iostream>
#include <string>
#include <vector>

#include "chattox/cli.hpp"

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  return chattox::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cin, std::cout, std::cerr);
}

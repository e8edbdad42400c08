#include "gatevio/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return gatevio::cli_main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

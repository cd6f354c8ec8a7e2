#include <iostream>
#include <string>
#include <vector>

#include "chameleon/cli/app.hpp"

int main(int argc, char** argv) {
  chameleon::cli::configure_logging();
  std::vector<std::string> args(argv + 1, argv + argc);
  return chameleon::cli::run(args, std::cout, std::cerr);
}

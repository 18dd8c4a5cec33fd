#include <iostream>

#include "rxl/service/cli.hpp"

int main(int argc, char** argv) {
  return rxl::service::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}

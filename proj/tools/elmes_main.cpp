#include <iostream>

#include "elmes/cli.hpp"

int main(int argc, char** argv) {
  return elmes::dispatch(argc, argv, {std::cout, std::cerr, {}});
}

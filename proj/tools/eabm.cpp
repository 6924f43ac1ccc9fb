#include "eabm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return eabm::cli::dispatch(std::move(args));
}

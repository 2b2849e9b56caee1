#include <string>
#include <vector>

#include "linkmoe/cli.hpp"

int main(int argc, char** argv) {
  return linkmoe::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}

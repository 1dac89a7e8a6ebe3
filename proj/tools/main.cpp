#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  viteraser::cli::CliInvocation inv;
  if (auto code = viteraser::cli::parse_args(argc, argv, inv, std::cout, std::cerr)) return *code;
  return viteraser::cli::run(inv, std::cout, std::cerr);
}

#include <iostream>

#include <qnmsaw/cli.hpp>

int main(int argc, char** argv) { return qnmsaw::cli::run(argc, argv, std::cout, std::cerr); }

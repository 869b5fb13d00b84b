#include <iostream>

#include "tavg/app.hpp"

int main(int argc, char** argv) { return tavg::app::run(argc, argv, std::cout, std::cerr); }

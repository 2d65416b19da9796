// Line-CSV protocol stub for exercising the external-model bridge.
//
//   ext_stub sum            respond with the sum of the row's fields
//   ext_stub affine B       respond with sum + B
//   ext_stub relu B         respond with max(0, sum + B): exactly flat below the fold
//   ext_stub slow MS        sleep MS milliseconds before each response
//   ext_stub garbage        respond with text that does not parse as a number
//   ext_stub quit-after N   answer N rows, then exit
//   ext_stub silent         consume rows, never respond

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "sum";
  const double arg = argc > 2 ? std::atof(argv[2]) : 0.0;
  long answered = 0;

  std::string line;
  while (std::getline(std::cin, line)) {
    if (mode == "silent") continue;
    if (mode == "slow") {
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(arg)));
    }

    double sum = 0.0;
    std::stringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) sum += std::strtod(field.c_str(), nullptr);

    if (mode == "garbage") {
      std::printf("mystery\n");
    } else if (mode == "affine") {
      std::printf("%.17g\n", sum + arg);
    } else if (mode == "relu") {
      std::printf("%.17g\n", sum + arg > 0.0 ? sum + arg : 0.0);
    } else {
      std::printf("%.17g\n", sum);
    }
    std::fflush(stdout);

    ++answered;
    if (mode == "quit-after" && answered >= static_cast<long>(arg)) return 0;
  }
  return 0;
}

#include <cstdio>

int main(int, char**) {
  std::puts("locoplan: command line not wired up yet");
  return 1;
}

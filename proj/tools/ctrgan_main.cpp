#include <cstdio>

int main() {
  std::puts("ctrgan: CLI under construction");
  return 0;
}

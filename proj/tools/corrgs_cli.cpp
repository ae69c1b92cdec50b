#include <iostream>

int main() {
  std::cout << "corrgs cli placeholder\n";
  return 0;
}

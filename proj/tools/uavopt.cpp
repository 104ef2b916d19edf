#include <cstdio>
int main() { std::puts("uavopt placeholder"); return 0; }

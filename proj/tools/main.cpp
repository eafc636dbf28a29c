#include "patchgraph/numkit/tensor.hpp"

int main(int, char**) { return 0; }

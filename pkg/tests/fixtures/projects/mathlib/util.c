#include "util.h"

int triple_plus_one(int x) {
    return x * 3 + 1;
}

int clamp_add(int a, int b) {
    long sum = (long)a + b;
    if (sum > 1000000) return 1000000;
    if (sum < -1000000) return -1000000;
    return (int)sum;
}

#ifndef UTIL_H
#define UTIL_H
int triple_plus_one(int x);
int clamp_add(int a, int b);
#endif

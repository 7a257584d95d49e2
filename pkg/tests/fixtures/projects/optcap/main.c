#include <stdio.h>
int answer(void) { return 7; }
int main(void) { printf("%d\n", answer()); return 0; }

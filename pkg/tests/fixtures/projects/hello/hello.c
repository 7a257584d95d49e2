#include <stdio.h>
#include <stdlib.h>

__attribute__((noinline)) int process(int x) {
    if (__builtin_expect(x == 42, 0)) {
        fprintf(stderr, "bad value %d\n", x);
        fprintf(stderr, "dumping state\n");
        for (int i = 0; i < x; i++)
            fprintf(stderr, "state[%d]\n", i);
        abort();
    }
    return x * 7 + 3;
}

int main(int argc, char **argv) {
    (void)argv;
    printf("%d\n", process(argc));
    return 0;
}

#include "gg_test.h"

int clamp_add(int a, int b, int limit);
int twice(int x);

int main(void) {
    GG_CHECK(clamp_add(2, 3, 10) == 5);
    GG_CHECK(clamp_add(8, 9, 10) == 10);
    GG_CHECK(twice(21) == 42);
    return gg_report();
}

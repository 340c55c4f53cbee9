#include "gg_test.h"

long fib(int n);
long fib_sum(int n);

int main(void) {
    GG_CHECK(fib(0) == 0);
    GG_CHECK(fib(1) == 1);
    GG_CHECK(fib(2) == 1);
    GG_CHECK(fib(10) == 55);
    GG_CHECK(fib(30) == 832040);
    GG_CHECK(fib_sum(5) == 12);
    GG_CHECK(fib_sum(0) == 0);
    return gg_report();
}

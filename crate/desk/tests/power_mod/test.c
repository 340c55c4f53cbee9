#include "gg_test.h"

long power_mod(long base, long exp, long mod);
long power(long base, int exp);

int main(void) {
    GG_CHECK(power_mod(2, 10, 1000) == 24);
    GG_CHECK(power_mod(3, 0, 7) == 1);
    GG_CHECK(power_mod(5, 3, 1) == 0);
    GG_CHECK(power_mod(7, 13, 11) == 2);
    GG_CHECK(power(2, 0) == 1);
    GG_CHECK(power(3, 4) == 81);
    GG_CHECK(power(-2, 3) == -8);
    return gg_report();
}

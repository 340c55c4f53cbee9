#include "gg_test.h"

long gcd(long a, long b);
long lcm(long a, long b);

int main(void) {
    GG_CHECK(gcd(12, 18) == 6);
    GG_CHECK(gcd(-12, 18) == 6);
    GG_CHECK(gcd(12, -8) == 4);
    GG_CHECK(gcd(17, 5) == 1);
    GG_CHECK(gcd(0, 9) == 9);
    GG_CHECK(lcm(4, 6) == 12);
    GG_CHECK(lcm(0, 6) == 0);
    GG_CHECK(lcm(7, 3) == 21);
    return gg_report();
}

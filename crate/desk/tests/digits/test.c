#include "gg_test.h"

int digit_sum(long n);
long reverse_number(long n);
int digit_count(long n);

int main(void) {
    GG_CHECK(digit_sum(0) == 0);
    GG_CHECK(digit_sum(12345) == 15);
    GG_CHECK(digit_sum(-99) == 18);
    GG_CHECK(reverse_number(1230) == 321);
    GG_CHECK(reverse_number(7) == 7);
    GG_CHECK(digit_count(0) == 1);
    GG_CHECK(digit_count(99999) == 5);
    return gg_report();
}

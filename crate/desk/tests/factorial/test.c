#include "gg_test.h"

long fact_rec(int n);
long fact_iter(int n);
long choose(int n, int k);

int main(void) {
    GG_CHECK(fact_rec(0) == 1);
    GG_CHECK(fact_rec(5) == 120);
    GG_CHECK(fact_rec(10) == 3628800);
    GG_CHECK(fact_iter(1) == 1);
    GG_CHECK(fact_iter(6) == 720);
    GG_CHECK(choose(5, 2) == 10);
    GG_CHECK(choose(10, 3) == 120);
    return gg_report();
}

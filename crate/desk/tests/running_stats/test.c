#include "gg_test.h"

long mean_floor(const int *a, int n);
long variance_floor(const int *a, int n);
void clamp_all(int *a, int n, int lo, int hi);

int main(void) {
    int a[5] = {2, 4, 4, 4, 6};
    int c[4] = {-5, 0, 5, 50};
    GG_CHECK(mean_floor(a, 5) == 4);
    GG_CHECK(mean_floor(a, 0) == 0);
    GG_CHECK(variance_floor(a, 5) == 1);
    GG_CHECK(variance_floor(a, 0) == 0);
    clamp_all(c, 4, 0, 10);
    GG_CHECK(c[0] == 0 && c[1] == 0 && c[2] == 5 && c[3] == 10);
    return gg_report();
}

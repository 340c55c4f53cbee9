#include "gg_test.h"

int binary_search(const int *a, int n, int key);
int lower_bound(const int *a, int n, int key);

int main(void) {
    int a[8] = {1, 3, 5, 7, 9, 11, 13, 15};
    GG_CHECK(binary_search(a, 8, 1) == 0);
    GG_CHECK(binary_search(a, 8, 15) == 7);
    GG_CHECK(binary_search(a, 8, 9) == 4);
    GG_CHECK(binary_search(a, 8, 4) == -1);
    GG_CHECK(lower_bound(a, 8, 4) == 2);
    GG_CHECK(lower_bound(a, 8, 0) == 0);
    GG_CHECK(lower_bound(a, 8, 99) == 8);
    return gg_report();
}

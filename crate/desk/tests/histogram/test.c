#include "gg_test.h"

void histogram(const int *values, int n, int *buckets, int nbuckets, int width);
int histogram_mode(const int *buckets, int nbuckets);

int main(void) {
    int v[9] = {1, 5, 12, 14, 18, 25, 33, 99, 11};
    int b[4];
    histogram(v, 9, b, 4, 10);
    GG_CHECK(b[0] == 2);
    GG_CHECK(b[1] == 4);
    GG_CHECK(b[2] == 1);
    GG_CHECK(b[3] == 2);
    GG_CHECK(histogram_mode(b, 4) == 1);
    histogram(v, 0, b, 4, 10);
    GG_CHECK(b[0] == 0 && b[3] == 0);
    return gg_report();
}

#include "gg_test.h"

void mat_mul(const int a[3][3], const int b[3][3], int out[3][3]);
int mat_trace(const int m[3][3]);
void mat_transpose(int m[3][3]);

int main(void) {
    int a[3][3] = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
    int id[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    int out[3][3];
    mat_mul(a, id, out);
    GG_CHECK(out[0][0] == 1 && out[1][2] == 6 && out[2][1] == 8);
    mat_mul(a, a, out);
    GG_CHECK(out[0][0] == 30 && out[1][1] == 81 && out[2][2] == 150);
    GG_CHECK(out[0][2] == 42);
    GG_CHECK(mat_trace(a) == 15);
    mat_transpose(a);
    GG_CHECK(a[0][1] == 4 && a[1][0] == 2 && a[2][0] == 3);
    return gg_report();
}

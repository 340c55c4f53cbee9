/* Coverage fixture: gcov reports 10 executable lines here and the
 * driver never reaches the negative branch of clamp_add. */
int clamp_add(int a, int b, int limit) {
    int s = a + b;
    if (s > limit)
        s = limit;
    if (s < 0)
        s = 0;
    return s;
}

int twice(int x) {
    int y = x * 2;
    return y;
}

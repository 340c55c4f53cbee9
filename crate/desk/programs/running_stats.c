/* Integer mean, variance and clamping over arrays. */
long mean_floor(const int *a, int n) {
    long s = 0;
    int i;
    if (n == 0)
        return 0;
    for (i = 0; i < n; i++)
        s += a[i];
    return s / n;
}

long variance_floor(const int *a, int n) {
    long m = mean_floor(a, n);
    long s = 0;
    int i;
    if (n == 0)
        return 0;
    for (i = 0; i < n; i++)
        s += (a[i] - m) * (a[i] - m);
    return s / n;
}

void clamp_all(int *a, int n, int lo, int hi) {
    int i;
    for (i = 0; i < n; i++) {
        if (a[i] < lo)
            a[i] = lo;
        else if (a[i] > hi)
            a[i] = hi;
    }
}

/* Prefix sums and range queries over them. */
void prefix_sums(const int *a, long *out, int n) {
    long s = 0;
    int i;
    for (i = 0; i < n; i++) {
        s += a[i];
        out[i] = s;
    }
}

long range_sum(const long *prefix, int lo, int hi) {
    if (lo == 0)
        return prefix[hi];
    return prefix[hi] - prefix[lo - 1];
}

int max_window(const int *a, int n, int k) {
    int best = 0;
    int cur = 0;
    int i;
    for (i = 0; i < k; i++)
        cur += a[i];
    best = cur;
    for (i = k; i < n; i++) {
        cur += a[i] - a[i - k];
        if (cur > best)
            best = cur;
    }
    return best;
}

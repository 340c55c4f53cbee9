/* Sum, minimum and maximum of an integer array. */
long array_sum(const int *a, int n) {
    long s = 0;
    int i;
    for (i = 0; i < n; i++)
        s += a[i];
    return s;
}

int array_max(const int *a, int n) {
    int m = a[0];
    int i;
    for (i = 1; i < n; i++) {
        if (a[i] > m)
            m = a[i];
    }
    return m;
}

int array_min(const int *a, int n) {
    int m = a[0];
    int i;
    for (i = 1; i < n; i++) {
        if (a[i] < m)
            m = a[i];
    }
    return m;
}

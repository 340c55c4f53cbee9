/* Bucketed histogram of small non-negative values. */
void histogram(const int *values, int n, int *buckets, int nbuckets, int width) {
    int i;
    for (i = 0; i < nbuckets; i++)
        buckets[i] = 0;
    for (i = 0; i < n; i++) {
        int b = values[i] / width;
        if (b >= nbuckets)
            b = nbuckets - 1;
        buckets[b]++;
    }
}

int histogram_mode(const int *buckets, int nbuckets) {
    int best = 0;
    int i;
    for (i = 1; i < nbuckets; i++) {
        if (buckets[i] > buckets[best])
            best = i;
    }
    return best;
}

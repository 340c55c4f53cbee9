/* Factorials, recursive and iterative, plus binomial coefficients. */
long fact_rec(int n) {
    if (n <= 1)
        return 1;
    return n * fact_rec(n - 1);
}

long fact_iter(int n) {
    long r = 1;
    while (n > 1) {
        r *= n;
        n--;
    }
    return r;
}

long choose(int n, int k) {
    return fact_iter(n) / (fact_iter(k) * fact_iter(n - k));
}

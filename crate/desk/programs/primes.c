/* Trial-division primality and prime counting. */
int is_prime(int n) {
    int d;
    if (n < 2)
        return 0;
    if (n % 2 == 0)
        return n == 2;
    for (d = 3; d * d <= n; d += 2) {
        if (n % d == 0)
            return 0;
    }
    return 1;
}

int count_primes(int limit) {
    int c = 0;
    int i;
    for (i = 2; i <= limit; i++)
        c += is_prime(i);
    return c;
}

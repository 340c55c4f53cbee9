/* Modular exponentiation by squaring. */
long power_mod(long base, long exp, long mod) {
    long result = 1;
    if (mod == 1)
        return 0;
    base %= mod;
    while (exp > 0) {
        if (exp & 1)
            result = result * base % mod;
        exp >>= 1;
        base = base * base % mod;
    }
    return result;
}

long power(long base, int exp) {
    long r = 1;
    while (exp-- > 0)
        r *= base;
    return r;
}

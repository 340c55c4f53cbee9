/* Decimal digit manipulation. */
int digit_sum(long n) {
    int s = 0;
    if (n < 0)
        n = -n;
    while (n > 0) {
        s += n % 10;
        n /= 10;
    }
    return s;
}

long reverse_number(long n) {
    long r = 0;
    while (n > 0) {
        r = r * 10 + n % 10;
        n /= 10;
    }
    return r;
}

int digit_count(long n) {
    int c = 1;
    while (n >= 10) {
        n /= 10;
        c++;
    }
    return c;
}

/* Iterative Fibonacci numbers and their running sums. */
long fib(int n) {
    long a = 0;
    long b = 1;
    int i;
    for (i = 0; i < n; i++) {
        long t = a + b;
        a = b;
        b = t;
    }
    return a;
}

long fib_sum(int n) {
    long s = 0;
    int i;
    for (i = 0; i <= n; i++)
        s += fib(i);
    return s;
}

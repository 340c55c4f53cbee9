/* Collatz sequence lengths. */
int collatz_steps(long n) {
    int steps = 0;
    while (n != 1) {
        if (n % 2 == 0)
            n = n / 2;
        else
            n = 3 * n + 1;
        steps++;
    }
    return steps;
}

int longest_collatz(int limit) {
    int best = 1;
    int best_steps = 0;
    int i;
    for (i = 1; i <= limit; i++) {
        int s = collatz_steps(i);
        if (s > best_steps) {
            best_steps = s;
            best = i;
        }
    }
    return best;
}

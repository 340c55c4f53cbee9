/* Character frequency counting. */
int count_char(const char *s, char c) {
    int n = 0;
    while (*s) {
        if (*s == c)
            n++;
        s++;
    }
    return n;
}

char most_frequent(const char *s) {
    int counts[128];
    int i;
    char best = 0;
    for (i = 0; i < 128; i++)
        counts[i] = 0;
    for (; *s; s++)
        counts[(int)*s & 127]++;
    for (i = 1; i < 128; i++) {
        if (counts[i] > counts[(int)best])
            best = (char)i;
    }
    return best;
}

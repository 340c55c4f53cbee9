/* Bit counting helpers. */
int popcount(unsigned long x) {
    int c = 0;
    while (x) {
        x &= x - 1;
        c++;
    }
    return c;
}

int parity(unsigned long x) {
    return popcount(x) & 1;
}

int highest_bit(unsigned long x) {
    int pos = -1;
    while (x) {
        x >>= 1;
        pos++;
    }
    return pos;
}

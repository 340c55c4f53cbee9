/* Adler-32 and a simple rolling XOR checksum. */
unsigned long adler32(const unsigned char *data, int n) {
    unsigned long a = 1;
    unsigned long b = 0;
    int i;
    for (i = 0; i < n; i++) {
        a = (a + data[i]) % 65521;
        b = (b + a) % 65521;
    }
    return (b << 16) | a;
}

unsigned char xor_checksum(const unsigned char *data, int n) {
    unsigned char x = 0;
    int i;
    for (i = 0; i < n; i++)
        x ^= data[i];
    return x;
}

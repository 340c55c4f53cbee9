/* Caesar cipher over ASCII letters. */
static char shift_char(char c, int k) {
    if (c >= 'a' && c <= 'z')
        return (char)('a' + (c - 'a' + k) % 26);
    if (c >= 'A' && c <= 'Z')
        return (char)('A' + (c - 'A' + k) % 26);
    return c;
}

void caesar_encode(char *s, int key) {
    int k = key % 26;
    if (k < 0)
        k += 26;
    for (; *s; s++)
        *s = shift_char(*s, k);
}

void caesar_decode(char *s, int key) {
    caesar_encode(s, -key);
}

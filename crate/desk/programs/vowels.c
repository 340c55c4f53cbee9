/* Vowel and consonant counts in a NUL-terminated string. */
static int is_vowel(char c) {
    switch (c) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
    case 'A': case 'E': case 'I': case 'O': case 'U':
        return 1;
    default:
        return 0;
    }
}

int count_vowels(const char *s) {
    int n = 0;
    for (; *s; s++)
        n += is_vowel(*s);
    return n;
}

int count_consonants(const char *s) {
    int n = 0;
    for (; *s; s++) {
        char c = *s;
        int letter = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
        if (letter && !is_vowel(c))
            n++;
    }
    return n;
}

/* String length and in-place reversal. */
int str_len(const char *s) {
    int n = 0;
    while (s[n] != '\0')
        n++;
    return n;
}

void str_reverse(char *s) {
    int i = 0;
    int j = str_len(s) - 1;
    while (i < j) {
        char t = s[i];
        s[i] = s[j];
        s[j] = t;
        i++;
        j--;
    }
}

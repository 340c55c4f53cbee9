/* Palindromes over letters only, ignoring case. */
static int is_alpha(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

static char lower(char c) {
    if (c >= 'A' && c <= 'Z')
        return c - 'A' + 'a';
    return c;
}

int is_palindrome(const char *s, int n) {
    int i = 0;
    int j = n - 1;
    while (i < j) {
        if (!is_alpha(s[i])) {
            i++;
        } else if (!is_alpha(s[j])) {
            j--;
        } else {
            if (lower(s[i]) != lower(s[j]))
                return 0;
            i++;
            j--;
        }
    }
    return 1;
}

#include "gg_test.h"

int is_palindrome(const char *s, int n);

int main(void) {
    GG_CHECK(is_palindrome("racecar", 7));
    GG_CHECK(is_palindrome("A man, a plan", 13) == 0);
    GG_CHECK(is_palindrome("Never odd or even", 17));
    GG_CHECK(is_palindrome("abca", 4) == 0);
    GG_CHECK(is_palindrome("", 0));
    GG_CHECK(is_palindrome("Ab!", 3) == 0);
    GG_CHECK(is_palindrome("!aA", 3));
    return gg_report();
}

#include "gg_test.h"

int str_compare(const char *a, const char *b);
int starts_with(const char *s, const char *prefix);
int common_prefix(const char *a, const char *b);

int main(void) {
    GG_CHECK(str_compare("abc", "abc") == 0);
    GG_CHECK(str_compare("abc", "abd") < 0);
    GG_CHECK(str_compare("b", "a") > 0);
    GG_CHECK(str_compare("ab", "abc") < 0);
    GG_CHECK(starts_with("transpile", "trans"));
    GG_CHECK(!starts_with("trans", "transpile"));
    GG_CHECK(common_prefix("flower", "flow") == 4);
    GG_CHECK(common_prefix("dog", "cat") == 0);
    return gg_report();
}

#include "gg_test.h"

struct node {
    int value;
    struct node *next;
};

int list_length(const struct node *head);
long list_sum(const struct node *head);
struct node *list_reverse(struct node *head);

int main(void) {
    struct node c = {30, 0};
    struct node b = {20, &c};
    struct node a = {10, &b};
    struct node *r;
    GG_CHECK(list_length(0) == 0);
    GG_CHECK(list_length(&a) == 3);
    GG_CHECK(list_sum(&a) == 60);
    r = list_reverse(&a);
    GG_CHECK(r == &c);
    GG_CHECK(r->next == &b && b.next == &a && a.next == 0);
    GG_CHECK(list_sum(r) == 60);
    return gg_report();
}

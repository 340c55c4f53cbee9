/* Singly linked list over caller-provided nodes. */
struct node {
    int value;
    struct node *next;
};

int list_length(const struct node *head) {
    int n = 0;
    while (head) {
        n++;
        head = head->next;
    }
    return n;
}

long list_sum(const struct node *head) {
    long s = 0;
    for (; head; head = head->next)
        s += head->value;
    return s;
}

struct node *list_reverse(struct node *head) {
    struct node *prev = 0;
    while (head) {
        struct node *next = head->next;
        head->next = prev;
        prev = head;
        head = next;
    }
    return prev;
}

/* Triangle classification by side lengths. */
int classify_triangle(int a, int b, int c) {
    if (a <= 0 || b <= 0 || c <= 0)
        return -1;
    if (a + b <= c || a + c <= b || b + c <= a)
        return -1;
    if (a == b && b == c)
        return 3;
    if (a == b || b == c || a == c)
        return 2;
    return 1;
}

int is_right_triangle(int a, int b, int c) {
    int aa = a * a;
    int bb = b * b;
    int cc = c * c;
    return aa + bb == cc || aa + cc == bb || bb + cc == aa;
}

#include "gg_test.h"

static int gg_passed;
static int gg_total;

#ifdef GG_HOSTED
#include <stdlib.h>
#include <unistd.h>

void gg_write(const char *buf, gg_size_t len) { (void)!write(1, buf, len); }
void gg_exit(int code) { exit(code); }
#else

#if defined(__x86_64__)
static long gg_syscall3(long n, long a, long b, long c) {
    long ret;
    __asm__ volatile("syscall" : "=a"(ret) : "a"(n), "D"(a), "S"(b), "d"(c) : "rcx", "r11", "memory");
    return ret;
}
#define GG_SYS_WRITE 1
#define GG_SYS_EXIT 60
__asm__(".text\n.globl _start\n_start:\n xor %rbp, %rbp\n and $-16, %rsp\n call gg_start_main\n ud2\n");
#elif defined(__aarch64__)
static long gg_syscall3(long n, long a, long b, long c) {
    register long x8 __asm__("x8") = n;
    register long x0 __asm__("x0") = a;
    register long x1 __asm__("x1") = b;
    register long x2 __asm__("x2") = c;
    __asm__ volatile("svc #0" : "+r"(x0) : "r"(x8), "r"(x1), "r"(x2) : "memory");
    return x0;
}
#define GG_SYS_WRITE 64
#define GG_SYS_EXIT 93
__asm__(".text\n.globl _start\n_start:\n mov x29, #0\n mov x30, #0\n bl gg_start_main\n brk #0\n");
#elif defined(__arm__)
static long gg_syscall3(long n, long a, long b, long c) {
    register long r7 __asm__("r7") = n;
    register long r0 __asm__("r0") = a;
    register long r1 __asm__("r1") = b;
    register long r2 __asm__("r2") = c;
    __asm__ volatile("svc #0" : "+r"(r0) : "r"(r7), "r"(r1), "r"(r2) : "memory");
    return r0;
}
#define GG_SYS_WRITE 4
#define GG_SYS_EXIT 1
__asm__(".text\n.globl _start\n_start:\n mov fp, #0\n mov lr, #0\n bl gg_start_main\n udf #0\n");
#elif defined(__riscv) && __riscv_xlen == 64
static long gg_syscall3(long n, long a, long b, long c) {
    register long a7 __asm__("a7") = n;
    register long a0 __asm__("a0") = a;
    register long a1 __asm__("a1") = b;
    register long a2 __asm__("a2") = c;
    __asm__ volatile("ecall" : "+r"(a0) : "r"(a7), "r"(a1), "r"(a2) : "memory");
    return a0;
}
#define GG_SYS_WRITE 64
#define GG_SYS_EXIT 93
__asm__(".text\n.globl _start\n_start:\n .option push\n .option norelax\n la gp, __global_pointer$\n .option pop\n li ra, 0\n call gg_start_main\n unimp\n");
#else
#error "unsupported target for the freestanding gg runtime"
#endif

void gg_write(const char *buf, gg_size_t len) { gg_syscall3(GG_SYS_WRITE, 1, (long)buf, (long)len); }

void gg_exit(int code) {
    for (;;)
        gg_syscall3(GG_SYS_EXIT, code, 0, 0);
}

int main(void);

void gg_start_main(void) { gg_exit(main()); }

/* Compilers may lower loops and aggregate copies into these calls. */
void *memset(void *dst, int c, gg_size_t n) {
    unsigned char *d = dst;
    while (n--)
        *d++ = (unsigned char)c;
    return dst;
}

void *memcpy(void *dst, const void *src, gg_size_t n) {
    unsigned char *d = dst;
    const unsigned char *s = src;
    while (n--)
        *d++ = *s++;
    return dst;
}

void *memmove(void *dst, const void *src, gg_size_t n) {
    unsigned char *d = dst;
    const unsigned char *s = src;
    if (d < s) {
        while (n--)
            *d++ = *s++;
    } else {
        d += n;
        s += n;
        while (n--)
            *--d = *--s;
    }
    return dst;
}

int memcmp(const void *a, const void *b, gg_size_t n) {
    const unsigned char *x = a, *y = b;
    for (; n; n--, x++, y++)
        if (*x != *y)
            return *x - *y;
    return 0;
}
#endif

static gg_size_t gg_strlen(const char *s) {
    gg_size_t n = 0;
    while (s[n])
        n++;
    return n;
}

void gg_print_str(const char *s) { gg_write(s, gg_strlen(s)); }

void gg_newline(void) { gg_write("\n", 1); }

void gg_puts(const char *s) {
    gg_print_str(s);
    gg_newline();
}

void gg_print_int(long v) {
    char buf[24];
    int i = 23;
    unsigned long u = v < 0 ? 0UL - (unsigned long)v : (unsigned long)v;
    buf[i] = 0;
    do {
        buf[--i] = (char)('0' + u % 10);
        u /= 10;
    } while (u);
    if (v < 0)
        buf[--i] = '-';
    gg_print_str(&buf[i]);
}

void gg_check_impl(int ok, const char *expr, int line) {
    gg_total++;
    if (ok) {
        gg_passed++;
        return;
    }
    gg_print_str("GG_FAIL line=");
    gg_print_int(line);
    gg_print_str(" ");
    gg_puts(expr);
}

int gg_report(void) {
    gg_print_str("GG_RESULT passed=");
    gg_print_int(gg_passed);
    gg_print_str(" total=");
    gg_print_int(gg_total);
    gg_newline();
    return gg_passed == gg_total ? 0 : 1;
}

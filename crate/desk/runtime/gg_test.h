/* Minimal test runtime shared by every desk test driver.
 *
 * Freestanding builds (the default) talk to the kernel directly and provide
 * _start; GG_HOSTED builds fall back to libc so gcov can instrument them. */
#ifndef GG_TEST_H
#define GG_TEST_H

typedef unsigned long gg_size_t;

void gg_write(const char *buf, gg_size_t len);
void gg_puts(const char *s);
void gg_print_int(long v);
void gg_print_str(const char *s);
void gg_newline(void);
void gg_exit(int code);

void gg_check_impl(int ok, const char *expr, int line);
int gg_report(void);

#define GG_CHECK(cond) gg_check_impl((cond) ? 1 : 0, #cond, __LINE__)

#endif

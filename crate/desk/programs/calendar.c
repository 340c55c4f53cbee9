/* Gregorian calendar helpers. */
int is_leap(int year) {
    if (year % 400 == 0)
        return 1;
    if (year % 100 == 0)
        return 0;
    return year % 4 == 0;
}

int days_in_month(int year, int month) {
    static const int days[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month < 1 || month > 12)
        return 0;
    if (month == 2 && is_leap(year))
        return 29;
    return days[month - 1];
}

int day_of_year(int year, int month, int day) {
    int total = day;
    int m;
    for (m = 1; m < month; m++)
        total += days_in_month(year, m);
    return total;
}

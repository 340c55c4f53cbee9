/* 3x3 integer matrix product, trace and transpose. */
void mat_mul(const int a[3][3], const int b[3][3], int out[3][3]) {
    int i, j, k;
    for (i = 0; i < 3; i++) {
        for (j = 0; j < 3; j++) {
            int s = 0;
            for (k = 0; k < 3; k++)
                s += a[i][k] * b[k][j];
            out[i][j] = s;
        }
    }
}

int mat_trace(const int m[3][3]) {
    return m[0][0] + m[1][1] + m[2][2];
}

void mat_transpose(int m[3][3]) {
    int i, j;
    for (i = 0; i < 3; i++) {
        for (j = i + 1; j < 3; j++) {
            int t = m[i][j];
            m[i][j] = m[j][i];
            m[j][i] = t;
        }
    }
}

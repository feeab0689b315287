#include <math.h>
#include <stdio.h>
#include <stdlib.h>

static void step(double *s, double h) {
    double x = s[0], y = s[1], z = s[2];
    const double x0 = x, y0 = y, z0 = z;
    for (int it = 0; it < 30; it++) {
        double f0 = -0.04 * x + 1e4 * y * z;
        double f1 = 0.04 * x - 1e4 * y * z - 3e7 * y * y;
        double f2 = 3e7 * y * y;
        double r[3] = {-(x - x0 - h * f0), -(y - y0 - h * f1), -(z - z0 - h * f2)};
        double m[3][3] = {
            {1 + h * 0.04, -h * 1e4 * z, -h * 1e4 * y},
            {-h * 0.04, 1 + h * (1e4 * z + 6e7 * y), h * 1e4 * y},
            {0, -h * 6e7 * y, 1},
        };
        double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                   - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                   + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        double d[3];
        for (int c = 0; c < 3; c++) {
            double t[3][3];
            for (int i = 0; i < 3; i++)
                for (int j = 0; j < 3; j++) t[i][j] = j == c ? r[i] : m[i][j];
            d[c] = (t[0][0] * (t[1][1] * t[2][2] - t[1][2] * t[2][1])
                  - t[0][1] * (t[1][0] * t[2][2] - t[1][2] * t[2][0])
                  + t[0][2] * (t[1][0] * t[2][1] - t[1][1] * t[2][0])) / det;
        }
        x += d[0];
        y += d[1];
        z += d[2];
        if (fabs(d[0]) + fabs(d[1]) + fabs(d[2]) < 1e-15) break;
    }
    s[0] = x;
    s[1] = y;
    s[2] = z;
}

int main(int argc, char **argv) {
    if (argc < 3) return 2;
    FILE *in = fopen(argv[1], "r");
    if (!in) return 3;
    size_t cap = 16, n = 0;
    double *rows = malloc(sizeof(double) * 5 * cap);
    double v[5];
    while (fscanf(in, " %lf , %lf , %lf , %lf , %lf", &v[0], &v[1], &v[2], &v[3], &v[4]) == 5) {
        if (n == cap) {
            cap *= 2;
            rows = realloc(rows, sizeof(double) * 5 * cap);
        }
        for (int i = 0; i < 5; i++) rows[5 * n + i] = v[i];
        n++;
    }
    fclose(in);

    printf("MEASURE_BEGIN\n");
    fflush(stdout);
    for (size_t c = 0; c < n; c++) {
        double *r = &rows[5 * c];
        long steps = (long)r[4];
        for (long s = 0; s < steps; s++) step(r, r[3]);
    }
    printf("MEASURE_END\n");
    fflush(stdout);

    FILE *out = fopen(argv[2], "w");
    if (!out) return 6;
    for (size_t c = 0; c < n; c++) fprintf(out, "%.17g,%.17g,%.17g\n", rows[5 * c], rows[5 * c + 1], rows[5 * c + 2]);
    fclose(out);
    return 0;
}

#include <stdlib.h>

int sum_squares(const int v[8], int n)
{
    int m = (n & 7) + 1;
    int *sq = malloc(m * sizeof(int));
    int total = 0;
    for (int i = 0; i < 8; i++) {
        sq[i % m] = v[i] * v[i];
        total += sq[i % m];
    }
    free(sq);
    return total;
}

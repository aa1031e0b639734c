#include <math.h>

int root_sum(const int v[4])
{
    double s = 0.0;
    for (int i = 0; i < 4; i++) {
        s += sqrt((double)(v[i] & 0xFFFF));
    }
    return (int)s;
}

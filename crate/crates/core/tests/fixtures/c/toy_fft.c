/* 16-point DFT over integer samples with a runtime-built twiddle table. */
#include <math.h>

double tw[16];

void init_tw(void)
{
    for (int k = 0; k < 8; k++) {
        tw[2 * k] = cos(2.0 * 3.14159265358979323846 * k / 16.0);
        tw[2 * k + 1] = -sin(2.0 * 3.14159265358979323846 * k / 16.0);
    }
}

void fft16(const int in[16], int out[16])
{
    for (int k = 0; k < 8; k++) {
        double re = 0.0;
        double im = 0.0;
        for (int n = 0; n < 16; n++) {
            int idx = (n * k) & 15;
            double sign = (idx >= 8) ? -1.0 : 1.0;
            re += (double)in[n] * tw[2 * (idx & 7)] * sign;
            im += (double)in[n] * tw[2 * (idx & 7) + 1] * sign;
        }
        out[2 * k] = (int)(long long)re;
        out[2 * k + 1] = (int)(long long)im;
    }
}

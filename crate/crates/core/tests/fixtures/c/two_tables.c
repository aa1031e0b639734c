#include <stdint.h>

#define QMOD 3329

static uint32_t zetas[8];
int16_t inv_tab[4];

void init_tables(void)
{
    uint32_t z = 1;
    for (int i = 0; i < 8; i++) {
        zetas[i] = z;
        z = (z * 17) % QMOD;
    }
    for (int j = 0; j < 4; j++) {
        inv_tab[j] = (int16_t)(QMOD - (int)zetas[2 * j]);
    }
}

void twist(const uint32_t in[8], uint32_t out[8])
{
    for (int i = 0; i < 8; i++) {
        out[i] = (in[i] % QMOD) * zetas[i] % QMOD + (uint32_t)inv_tab[i & 3];
    }
}

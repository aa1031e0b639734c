#include <stdint.h>

#define QMOD 3329

#include "two_tables_consts.h"

void twist(const uint32_t in[8], uint32_t out[8])
{
    for (int i = 0; i < 8; i++) {
        out[i] = (in[i] % QMOD) * zetas[i] % QMOD + (uint32_t)inv_tab[i & 3];
    }
}

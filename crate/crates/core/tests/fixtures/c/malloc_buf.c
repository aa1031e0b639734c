#include <stdint.h>
#include <stdlib.h>

static void release(uint32_t *p)
{
    free(p);
}

void mix16(const uint32_t in[16], uint32_t out[16])
{
    uint32_t *tmp = malloc(16 * sizeof(uint32_t));
    uint8_t *bytes;

    bytes = malloc(4);
    for (int i = 0; i < 4; i++) {
        bytes[i] = (uint8_t)(in[i] >> 3);
    }
    for (int i = 0; i < 16; i++) {
        tmp[i] = in[i] * 3u + 1u + bytes[i & 3];
    }
    for (int i = 0; i < 16; i++) {
        out[i] = tmp[i] ^ tmp[15 - i];
    }
    free(bytes);
    release(tmp);
}

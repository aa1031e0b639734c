/* Gaussian sampler in the shape of a reference signature scheme sampler. */
#include <stdint.h>
#include <stddef.h>
#include <stdlib.h>

#define FPR_SHIFT 16

typedef uint64_t fpr;

typedef struct {
    union {
        uint8_t d[512];
        uint64_t dummy_u64;
    } buf;
    size_t ptr;
    union {
        uint8_t d[256];
        uint64_t dummy_u64;
    } state;
    int type;
} prng;

typedef struct {
    prng p;
    fpr sigma_min;
} sampler_context;

static const fpr fpr_inv_2sqrsigma0 = 98304;

static const uint16_t gauss_dist[6] = {
    52000, 30000, 12000, 3500, 700, 90
};

static fpr fpr_of(int64_t i)
{
    return (fpr)i << FPR_SHIFT;
}

static int64_t fpr_floor(fpr x)
{
    return (int64_t)((x >> FPR_SHIFT) & 0x7FFF);
}

static fpr fpr_sub(fpr a, fpr b)
{
    return a - b;
}

static fpr fpr_mul(fpr a, fpr b)
{
    return (a >> 8) * (b >> 8);
}

static fpr fpr_sqr(fpr a)
{
    return fpr_mul(a, a);
}

static fpr fpr_half(fpr a)
{
    return a >> 1;
}

static void prng_refill_no_structs(uint8_t p_buf[512], size_t p_ptr[1], uint8_t p_state[256])
{
    for (int i = 0; i < 512; i++) {
        p_buf[i] = (uint8_t)(p_state[i & 255] ^ (uint8_t)(i * 29 + 7));
    }
    for (int j = 0; j < 256; j++) {
        p_state[j] = (uint8_t)(p_state[j] * 5 + 1);
    }
    p_ptr[0] = 0;
}

static unsigned prng_get_u8_no_structs(uint8_t p_buf[512], size_t p_ptr[1], uint8_t p_state[256])
{
    if (p_ptr[0] >= 512) {
        prng_refill_no_structs(p_buf, p_ptr, p_state);
    }
    return p_buf[p_ptr[0]++];
}

static int gaussian0_sampler_no_structs(uint8_t p_buf[512], size_t p_ptr[1], uint8_t p_state[256])
{
    unsigned v;
    int z;

    v = prng_get_u8_no_structs(p_buf, p_ptr, p_state);
    v |= prng_get_u8_no_structs(p_buf, p_ptr, p_state) << 8;
    z = 0;
    for (int i = 0; i < 6; i++) {
        z += (int)(v < gauss_dist[i]);
    }
    return z;
}

static int BerExp_no_structs(uint8_t p_buf[512], size_t p_ptr[1], uint8_t p_state[256], fpr x, fpr ccs)
{
    uint64_t s;
    int w;

    s = (uint64_t)fpr_floor(fpr_mul(x, ccs)) & 7;
    w = (int)prng_get_u8_no_structs(p_buf, p_ptr, p_state) - (int)(s * 16);
    return w > 64;
}

int sampler_hls(fpr mu, fpr isigma, uint8_t p_buf[512], size_t p_ptr[1], uint8_t p_state[256], fpr sigma_min)
{
    int s;
    fpr r, dss, ccs;

    s = (int)fpr_floor(mu);
    r = fpr_sub(mu, fpr_of(s));
    dss = fpr_half(fpr_sqr(isigma));
    ccs = fpr_mul(isigma, sigma_min);
    for (;;) {
        int z0, z, b;
        fpr x;

        z0 = gaussian0_sampler_no_structs(p_buf, p_ptr, p_state);
        b = (int)prng_get_u8_no_structs(p_buf, p_ptr, p_state) & 1;
        z = b + ((b << 1) - 1) * z0;
        x = fpr_mul(fpr_sqr(fpr_sub(fpr_of(z), r)), dss);
        x = fpr_sub(x,
            fpr_mul(fpr_of(z0 * z0), fpr_inv_2sqrsigma0));
        if (BerExp_no_structs(p_buf, p_ptr, p_state, x, ccs))
        {
            return s + z;
        }
    }
}

int sampler(void *ctx, fpr mu, fpr isigma)
{
    sampler_context *spc = (sampler_context *)ctx;
    return sampler_hls(mu, isigma, spc->p.buf.d, &spc->p.ptr, spc->p.state.d, spc->sigma_min);
}

sampler_context *sampler_new(fpr sigma_min)
{
    sampler_context *spc = malloc(sizeof(sampler_context));
    spc->sigma_min = sigma_min;
    spc->p.ptr = 512;
    spc->p.type = 0;
    return spc;
}

void sampler_free(sampler_context *spc)
{
    free(spc);
}

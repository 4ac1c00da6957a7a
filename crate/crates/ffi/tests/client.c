#include <stdio.h>
#include "koopman_laplace.h"

int main(void) {
    KlSystem *sys = NULL;
    KlLimitCycle *lc = NULL;
    double x0[2] = {3.0, 0.0};
    double omega = 0.0, re[4], im[4];

    if (kl_system_vdp(0.3, &sys) != KL_STATUS_OK) return 1;
    if (kl_limit_cycle_locate(sys, x0, 2, 200.0, 1e-10, &lc) != KL_STATUS_OK) {
        fprintf(stderr, "%s\n", kl_last_error_message());
        return 2;
    }
    kl_limit_cycle_omega(lc, &omega);
    kl_limit_cycle_exponents(lc, re, im, 4);
    printf("version %s omega %.4f nu %.4f\n", kl_version(), omega, re[0]);

    double y[3] = {1.0, 0.5, 0.25}, vr, vi, bound;
    KlStatus st = kl_laplace_numeric(y, 3, 1.0, -1.0, 0.0, 2.0, &vr, &vi, &bound);
    printf("status %d %s\n", (int)st, kl_last_error_message());

    kl_limit_cycle_free(lc);
    kl_system_free(sys);
    return 0;
}

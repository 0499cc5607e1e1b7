/* Loads a chain file and prints reachability from state 0 to every state. */
#include <stdio.h>

#include "fairmc.h"

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s CHAIN\n", argv[0]);
        return 2;
    }
    FmDtmc *dtmc = NULL;
    if (fm_dtmc_load(argv[1], &dtmc) != FM_STATUS_OK) {
        fprintf(stderr, "error: %s\n", fm_last_error());
        return 1;
    }
    size_t m = fm_dtmc_state_count(dtmc);
    for (size_t t = 0; t < m; t++) {
        double p = 0.0;
        if (fm_dtmc_reach(dtmc, 0, t, &p) != FM_STATUS_OK) {
            fprintf(stderr, "error: %s\n", fm_last_error());
            fm_dtmc_free(dtmc);
            return 1;
        }
        printf("%zu %.6f\n", t, p);
    }
    double eps = 0.0, delta = 0.0;
    fm_derive_eps_delta(0.01, 0.1, &eps, &delta);
    printf("eps %.3f\n", eps);
    fm_dtmc_free(dtmc);
    return 0;
}

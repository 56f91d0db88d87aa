#include <math.h>
#include <stdio.h>
#include <string.h>

#include "bcos.h"

int main(void) {
    double h[3] = {1.0, 2.0, 0.5};
    double sigma[3] = {0.1, 0.1, 0.1};
    double center[3] = {1.0, -1.0, 0.5};
    double x[3] = {0.0, 0.0, 0.0};
    double g[3];
    BcosQuadratic *q = NULL;
    BcosOptimizer *opt = NULL;
    BcosOptimizerConfig cfg = bcos_optimizer_config_default(BCOS_ALGORITHM_BCOS_C);

    if (bcos_quadratic_new(h, sigma, center, 3, 7, &q) != BCOS_STATUS_OK) return 1;
    if (bcos_optimizer_new(&cfg, 3, 1, &opt) != BCOS_STATUS_OK) return 2;

    double before, after;
    bcos_quadratic_loss(q, x, 3, &before);
    for (int t = 0; t < 500; t++) {
        double alpha;
        if (bcos_schedule_value(BCOS_SCHEDULE_KIND_CONSTANT, 0.01, 1.0, 0, 0, 1.0, (size_t)t, &alpha) != BCOS_STATUS_OK) return 3;
        if (bcos_quadratic_sample_gradient(q, x, g, 3) != BCOS_STATUS_OK) return 4;
        if (bcos_optimizer_step(opt, x, g, 3, alpha) != BCOS_STATUS_OK) return 5;
    }
    bcos_quadratic_loss(q, x, 3, &after);
    if (!(after < before)) return 6;
    if (bcos_optimizer_steps(opt) != 500) return 7;

    if (bcos_optimizer_step(opt, x, g, 2, 0.1) != BCOS_STATUS_LENGTH_MISMATCH) return 8;
    if (strlen(bcos_last_error_message()) == 0) return 9;

    bcos_optimizer_free(opt);
    bcos_quadratic_free(q);
    printf("ok %s %.6f -> %.6f\n", bcos_version(), before, after);
    return 0;
}

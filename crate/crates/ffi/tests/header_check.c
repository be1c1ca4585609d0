#include <stddef.h>
#include "fedsim.h"

/* Type-checks every declaration against its intended use. */
int exercise(const char *json) {
    FedsimConfig *cfg = NULL;
    FedsimRun *run = NULL;
    if (fedsim_config_from_json(json, &cfg) != FEDSIM_STATUS_OK) {
        const char *msg = fedsim_last_error();
        return msg == NULL ? -1 : -2;
    }
    fedsim_config_set_seed(cfg, 7);
    fedsim_config_set_variant(cfg, "feddecab");
    if (fedsim_run(cfg, &run) == FEDSIM_STATUS_OK) {
        double rmse = 0.0;
        unsigned int uploads = 0;
        char *csv = NULL;
        fedsim_run_round_rmse(run, fedsim_run_rounds(run) - 1, &rmse);
        fedsim_run_uploads(run, 0, &uploads);
        fedsim_run_rounds_csv(run, &csv);
        fedsim_string_free(csv);
        fedsim_run_write_reports(run, "out");
        (void)fedsim_run_aborted(run);
        fedsim_run_free(run);
    }
    fedsim_config_free(cfg);

    double p[2] = {0.5, 0.5}, q[2], kl, b0, b1, b2, values[645];
    size_t h, o, n;
    fedsim_param_distribution(p, 2, q);
    fedsim_kl_divergence(p, q, 2, &kl);
    fedsim_solve_quadratic(2.0, 4, &b0, &b1, &b2);
    fedsim_fc_head_decode((const unsigned char *)"", 0, &h, &o, values, fedsim_fc_len(128, 5), &n);
    return FEDSIM_STATUS_PANIC;
}

#include <stdio.h>
#include <math.h>
#include "dwell_consensus.h"

int main(int argc, char **argv) {
    if (argc < 2) return 10;
    double p[4];
    if (dc_solve_riccati(2, 0.5, 1.0, p, 4) != DC_STATUS_OK) return 11;
    if (fabs(p[0] - sqrt(3.0)) > 1e-8 || fabs(p[1] - 1.0) > 1e-8) return 12;

    DcScenario *sc = NULL;
    if (dc_scenario_load(argv[1], &sc) != DC_STATUS_OK) {
        fprintf(stderr, "%s\n", dc_last_error());
        return 13;
    }
    DcRun *run = NULL;
    if (dc_scenario_run(sc, 0.0, &run) != DC_STATUS_OK) return 14;
    bool certified = false, converged = false;
    dc_run_verdict(run, &certified, &converged);
    char *json = NULL;
    if (dc_run_certificate_json(run, &json) != DC_STATUS_OK) return 15;
    printf("certified=%d converged=%d json_prefix=%.20s\n", certified, converged, json);
    dc_string_free(json);
    dc_run_free(run);
    dc_scenario_free(sc);

    if (dc_scenario_load(NULL, &sc) != DC_STATUS_NULL_POINTER) return 16;
    return certified && converged ? 0 : 17;
}

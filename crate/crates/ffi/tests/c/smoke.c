#include <math.h>
#include <stdio.h>
#include "lsa_lab.h"

static int check(int ok, const char *what) {
    if (!ok) {
        const char *err = lsa_lab_last_error();
        fprintf(stderr, "failed: %s (%s)\n", what, err ? err : "no message");
    }
    return ok ? 0 : 1;
}

int main(void) {
    int bad = 0;
    const double kernel[9] = {0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5};
    LsaLabCertificate *cert = NULL;
    bad += check(lsa_lab_certificate_finite_uniform(kernel, 3, 0.5, 1.0, 200, &cert) == LSA_LAB_STATUS_OK, "certificate");

    const double a[1] = {0.5};
    LsaLabReport *report = NULL;
    bad += check(lsa_lab_stability_constants(cert, a, 1, 0.25, 1.5, 2.0, &report) == LSA_LAB_STATUS_OK, "constants");
    double c_st = NAN;
    bad += check(lsa_lab_report_get(report, "C_st_p2", &c_st) == LSA_LAB_STATUS_OK && c_st >= 1.0, "C_st");
    bad += check(lsa_lab_report_get(report, "missing", &c_st) == LSA_LAB_STATUS_NOT_FOUND, "missing key");

    double u[201];
    LsaLabCounterexample ce;
    bad += check(lsa_lab_counterexample(3.0, 10000, 0.36, 0.5, 1.0, 200, u, &ce) == LSA_LAB_STATUS_OK, "counterexample");
    double peak = 0.0;
    for (int i = 0; i <= 200; i++) peak = u[i] > peak ? u[i] : peak;
    bad += check(ce.bound_holds && peak >= 10.0, "growth");

    bad += check(lsa_lab_certificate_finite_uniform(NULL, 3, 0.5, 1.0, 200, &cert) == LSA_LAB_STATUS_NULL_POINTER, "null kernel");

    lsa_lab_report_free(report);
    lsa_lab_certificate_free(cert);
    printf("c_st=%.6e peak=%.3e version=%s\n", c_st, peak, lsa_lab_version());
    return bad;
}

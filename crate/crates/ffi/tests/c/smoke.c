#include <stdio.h>
#include "nncert.h"

static const char *PROBLEM =
    "{\"shape\":{\"nx\":2,\"n1\":4,\"ny\":2},\"activation\":\"tanh\",\"mode\":\"residual\","
    "\"pairs\":[{\"input\":{\"A\":[[2,0],[0,2]],\"b\":[2,0]},"
    "\"output\":{\"C\":[[2,0],[0,2]],\"d\":[-2,-1]}}]}";

int main(void) {
    NncertProblem *problem = NULL;
    NncertReport *report = NULL;
    NncertNetwork *net = NULL;
    size_t counts[1];
    double x[2] = {-1.0, 0.0}, y[2];

    if (nncert_problem_from_json(PROBLEM, &problem) != NNCERT_STATUS_OK) {
        fprintf(stderr, "problem: %s\n", nncert_last_error());
        return 1;
    }
    if (nncert_learn(problem, &report) != NNCERT_STATUS_OK) {
        fprintf(stderr, "learn: %s\n", nncert_last_error());
        return 1;
    }
    if (nncert_report_outcome(report) != NNCERT_OUTCOME_FEASIBLE) return 2;
    if (nncert_report_network(report, &net) != NNCERT_STATUS_OK || net == NULL) return 3;
    if (nncert_network_forward(net, x, 2, y, 2) != NNCERT_STATUS_OK) return 4;
    if (nncert_monte_carlo(net, problem, 1000, 1, counts, 1) != NNCERT_STATUS_OK || counts[0] != 0) return 5;
    if (nncert_network_forward(net, x, 2, y, 3) != NNCERT_STATUS_DIMENSION) return 6;
    printf("ok %.6f %.6f\n", y[0], y[1]);

    nncert_network_free(net);
    nncert_report_free(report);
    nncert_problem_free(problem);
    return 0;
}

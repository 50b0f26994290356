#include <stdio.h>
#include "matchbandit.h"

int main(void) {
    MbEnvironment *env = NULL;
    if (mb_environment_generate(3, 2, 5, 2, 1, 2, &env) != MB_STATUS_OK) {
        fprintf(stderr, "%s\n", mb_last_error_message());
        return 1;
    }
    MbTrace *trace = NULL;
    MbStatus s = mb_run(env, "{\"algorithm\": \"baseline\", \"horizon\": 100}", &trace);
    if (s != MB_STATUS_OK) {
        fprintf(stderr, "%s\n", mb_last_error_message());
        mb_environment_free(env);
        return 1;
    }
    double regret[100];
    size_t written = 0;
    mb_trace_cumulative_regret(trace, regret, 100, &written);
    printf("rounds=%zu calls=%llu regret=%f\n", mb_trace_rounds(trace),
           (unsigned long long)mb_trace_optimizer_calls(trace), regret[written - 1]);

    MbTrace *bad = NULL;
    if (mb_run(env, "{\"algorithm\": 7}", &bad) != MB_STATUS_CONFIG || bad != NULL) {
        return 1;
    }
    mb_trace_free(trace);
    mb_environment_free(env);
    return 0;
}

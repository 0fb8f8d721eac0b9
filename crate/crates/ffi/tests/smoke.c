#include <stdio.h>
#include <stdlib.h>
#include "xgc.h"

int main(void) {
    XgcCompilation *c = NULL;
    if (xgc_compile_builtin("residual", "zu2", XGC_STRATEGY_OPTIMAL, &c) != XGC_STATUS_OK) {
        char msg[256];
        xgc_last_error(msg, sizeof msg);
        fprintf(stderr, "compile failed: %s\n", msg);
        return 1;
    }
    size_t len = 0;
    if (xgc_emit_binary(c, NULL, 0, &len) != XGC_STATUS_BUFFER_TOO_SMALL || len == 0) return 2;
    uint8_t *buf = malloc(len);
    if (xgc_emit_binary(c, buf, len, &len) != XGC_STATUS_OK) return 3;
    uint64_t cycles = 0;
    if (xgc_simulate(buf, len, "zu2", &cycles) != XGC_STATUS_OK || cycles == 0) return 4;
    int passed = 0;
    size_t offset = 0;
    if (xgc_verify(c, &passed, &offset) != XGC_STATUS_OK || !passed) return 5;
    if (xgc_compile_builtin("nope", "zu2", XGC_STRATEGY_NONE, &c) != XGC_STATUS_SCHEMA) return 6;
    printf("ok %zu bytes %llu cycles\n", len, (unsigned long long)cycles);
    free(buf);
    xgc_compilation_free(c);
    return 0;
}

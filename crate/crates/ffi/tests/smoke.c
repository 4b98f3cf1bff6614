#include "specibt.h"

int main(void) {
    SpecibtProgram *p = NULL;
    char *out = NULL;
    if (specibt_program_parse("entry main:\n  ret\n", &p) != SPECIBT_STATUS_OK)
        return 1;
    if (specibt_program_print(p, &out) == SPECIBT_STATUS_OK)
        specibt_string_free(out);
    specibt_program_free(p);
    return specibt_version()[0] ? 0 : 1;
}

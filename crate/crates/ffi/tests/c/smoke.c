#include "dkff.h"

int smoke(void) {
    double mean[1] = {0.0}, cov[1] = {1.0}, f[1] = {0.0}, qc[1] = {0.1};
    DkffBank *bank = NULL;
    if (dkff_bank_create(1, mean, cov, f, qc, &bank) != DKFF_STATUS_OK) {
        return 1;
    }
    double z[1] = {1.0}, h[1] = {1.0}, r[1] = {1.0};
    DkffMeasurement m = {DKFF_SENSOR_GPS, 1, z, h, r};
    dkff_bank_predict(bank, 0.1);
    dkff_bank_update(bank, &m, 1);
    dkff_bank_state(bank, mean, cov);
    dkff_bank_free(bank);
    return dkff_last_error()[0] != '\0';
}

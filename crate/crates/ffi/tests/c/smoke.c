#include <stdio.h>
#include <string.h>

#include "evokd.h"

#define CHECK(cond)                                                \
    do {                                                           \
        if (!(cond)) {                                             \
            fprintf(stderr, "check failed line %d: %s\n", __LINE__, #cond); \
            return 1;                                              \
        }                                                          \
    } while (0)

int main(void) {
    EvokdModel *model = NULL;
    const char *task = "{\"name\": \"t\", \"labels\": [\"pos\", \"neg\"]}";
    CHECK(evokd_model_new(task, 1024, &model) == EVOKD_OK);
    CHECK(evokd_model_num_labels(model) == 2);
    CHECK(strcmp(evokd_model_label(model, 1), "neg") == 0);

    const char *texts[] = {"good good", "bad bad"};
    const char *labels[] = {"pos", "neg"};
    double loss = 0.0;
    for (int i = 0; i < 20; i++) {
        CHECK(evokd_model_train_step(model, texts, labels, 2, 0.5, 2.0, &loss) == EVOKD_OK);
    }
    CHECK(evokd_model_version(model) == 20);

    size_t label = 99;
    double probs[2];
    CHECK(evokd_model_predict(model, "bad bad", &label, probs, 2) == EVOKD_OK);
    CHECK(label == 1);
    CHECK(probs[1] > 0.5);

    const char *wrong[] = {"meh"};
    const char *unknown[] = {"neutral"};
    CHECK(evokd_model_train_step(model, wrong, unknown, 1, 0.5, 2.0, NULL) == EVOKD_ERR_FAILURE);
    CHECK(evokd_last_error_message() != NULL);

    size_t easy, hard;
    CHECK(evokd_batch_split(7, &easy, &hard) == EVOKD_OK && easy == 3 && hard == 4);
    CHECK(evokd_classify_step(200, 40, 50) == EVOKD_EVENT_REVIEW);
    CHECK(evokd_model_predict(NULL, "x", &label, NULL, 0) == EVOKD_ERR_INVALID_ARGUMENT);

    evokd_model_free(model);
    printf("ok %s\n", evokd_version());
    return 0;
}

#include <stdio.h>
#include <string.h>

#include "mqttprobe.h"

#define CHECK(call)                                                        \
  do {                                                                     \
    MqttprobeStatus s_ = (call);                                           \
    if (s_ != MQTTPROBE_STATUS_OK) {                                       \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,                    \
              mqttprobe_last_error() ? mqttprobe_last_error() : "?");      \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  MqttprobeBroker *broker = NULL;
  MqttprobeExperiment *exp = NULL;
  MqttprobeTrace *trace = NULL;
  MqttprobeEvaluation *eval = NULL;
  char target[64];

  if (mqttprobe_corpus_len() < 17) return 2;
  if (mqttprobe_experiment_builtin("no_such", &exp) != MQTTPROBE_STATUS_NOT_FOUND) return 3;
  if (mqttprobe_last_error() == NULL) return 4;

  CHECK(mqttprobe_broker_start(0, 1, &broker));
  snprintf(target, sizeof target, "127.0.0.1:%u", (unsigned)mqttprobe_broker_port(broker));
  CHECK(mqttprobe_experiment_builtin("qos2_then_qos1_same_id", &exp));
  CHECK(mqttprobe_experiment_set_settle_ms(exp, 100));
  CHECK(mqttprobe_run(exp, target, &trace));
  if (mqttprobe_trace_outcome(trace) != MQTTPROBE_OUTCOME_COMPLETED) return 5;
  CHECK(mqttprobe_evaluate(exp, trace, &eval));
  if (mqttprobe_evaluation_max_severity(eval) != MQTTPROBE_SEVERITY_NONE) return 6;
  if (mqttprobe_evaluation_delivered(eval) != 2) return 7;

  printf("%s delivered %zu\n", mqttprobe_experiment_name(exp), mqttprobe_evaluation_delivered(eval));
  mqttprobe_evaluation_free(eval);
  mqttprobe_trace_free(trace);
  mqttprobe_experiment_free(exp);
  mqttprobe_broker_stop(broker);
  return 0;
}

#ifndef MQTTPROBE_H
#define MQTTPROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum MqttprobeAnomaly {
  MQTTPROBE_ANOMALY_LOST_MESSAGE = 0,
  MQTTPROBE_ANOMALY_DUPLICATE_DELIVERY = 1,
  MQTTPROBE_ANOMALY_REORDERED_DELIVERY = 2,
  MQTTPROBE_ANOMALY_ACK_BEFORE_PREREQUISITE = 3,
  MQTTPROBE_ANOMALY_LATE_COMPLETION = 4,
  MQTTPROBE_ANOMALY_TOPIC_TRUNCATION = 5,
  MQTTPROBE_ANOMALY_UNEXPECTED_DISCONNECT = 6,
  MQTTPROBE_ANOMALY_PROTOCOL_VIOLATION_TOLERATED = 7,
  MQTTPROBE_ANOMALY_ORPHAN_PUBREL_REJECTED = 8,
  MQTTPROBE_ANOMALY_BROKER_CRASH = 9,
  MQTTPROBE_ANOMALY_ID_REUSE_MISHANDLED = 10,
} MqttprobeAnomaly;

typedef enum MqttprobeOutcome {
  MQTTPROBE_OUTCOME_COMPLETED = 0,
  MQTTPROBE_OUTCOME_ABORTED_BY_PEER = 1,
  MQTTPROBE_OUTCOME_RUNNER_ERROR = 2,
} MqttprobeOutcome;

/*
 `None` stands for "no anomalies".
 */
typedef enum MqttprobeSeverity {
  MQTTPROBE_SEVERITY_NONE = -1,
  MQTTPROBE_SEVERITY_INFO = 0,
  MQTTPROBE_SEVERITY_WARNING = 1,
  MQTTPROBE_SEVERITY_DOS = 2,
  MQTTPROBE_SEVERITY_CRITICAL = 3,
} MqttprobeSeverity;

typedef enum MqttprobeStatus {
  MQTTPROBE_STATUS_OK = 0,
  MQTTPROBE_STATUS_NULL_ARGUMENT = 1,
  MQTTPROBE_STATUS_INVALID_UTF8 = 2,
  MQTTPROBE_STATUS_INVALID_INPUT = 3,
  MQTTPROBE_STATUS_NOT_FOUND = 4,
  MQTTPROBE_STATUS_IO = 5,
  MQTTPROBE_STATUS_INTERNAL = 6,
} MqttprobeStatus;

/*
 A running reference broker.
 */
typedef struct MqttprobeBroker MqttprobeBroker;

/*
 Oracle verdict on one trace.
 */
typedef struct MqttprobeEvaluation MqttprobeEvaluation;

/*
 A parsed experiment.
 */
typedef struct MqttprobeExperiment MqttprobeExperiment;

/*
 The recorded trace of one experiment run.
 */
typedef struct MqttprobeTrace MqttprobeTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL. Valid until the
 next call into the library on the same thread.
 */
const char *mqttprobe_last_error(void);

/*
 Library version, a static string.
 */
const char *mqttprobe_version(void);

/*
 # Safety
 `s` must be NULL or a string returned by this library.
 */
void mqttprobe_string_free(char *s);

/*
 # Safety
 `p`/`len` must be NULL/0 or a buffer returned by this library.
 */
void mqttprobe_bytes_free(uint8_t *p, uintptr_t len);

/*
 Number of builtin experiments.
 */
uintptr_t mqttprobe_corpus_len(void);

/*
 Name of builtin experiment `index`, a static string, or NULL when out of range.
 */
const char *mqttprobe_corpus_name(uintptr_t index);

/*
 Parse an experiment from JSON.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum MqttprobeStatus mqttprobe_experiment_parse(const char *json, struct MqttprobeExperiment **out);

/*
 Look up a builtin experiment by name.

 # Safety
 `name` must be a NUL-terminated string; `out` must be writable.
 */
enum MqttprobeStatus mqttprobe_experiment_builtin(const char *name,
                                                  struct MqttprobeExperiment **out);

/*
 The experiment's name, owned by the handle.

 # Safety
 `experiment` must be NULL or a live handle.
 */
const char *mqttprobe_experiment_name(const struct MqttprobeExperiment *experiment);

/*
 Override the settle window.

 # Safety
 `experiment` must be NULL or a live handle.
 */
enum MqttprobeStatus mqttprobe_experiment_set_settle_ms(struct MqttprobeExperiment *experiment,
                                                        uint64_t settle_ms);

/*
 Canonical JSON for the experiment; free with `mqttprobe_string_free`.

 # Safety
 `experiment` must be a live handle; `out` must be writable.
 */
enum MqttprobeStatus mqttprobe_experiment_to_json(const struct MqttprobeExperiment *experiment,
                                                  char **out);

/*
 # Safety
 `experiment` must be NULL or a handle not yet freed.
 */
void mqttprobe_experiment_free(struct MqttprobeExperiment *experiment);

/*
 Start the reference broker. Port 0 picks a free port; `loopback_only`
 nonzero binds 127.0.0.1 instead of all interfaces.

 # Safety
 `out` must be writable.
 */
enum MqttprobeStatus mqttprobe_broker_start(uint16_t port,
                                            int32_t loopback_only,
                                            struct MqttprobeBroker **out);

/*
 Port the broker listens on, 0 for NULL.

 # Safety
 `broker` must be NULL or a live handle.
 */
uint16_t mqttprobe_broker_port(const struct MqttprobeBroker *broker);

/*
 Stop the broker and release the handle.

 # Safety
 `broker` must be NULL or a handle not yet stopped.
 */
void mqttprobe_broker_stop(struct MqttprobeBroker *broker);

/*
 Run `experiment` against `target` (`host[:port]`). A run that could not
 reach the broker still yields a trace, with outcome `RUNNER_ERROR`.

 # Safety
 `experiment` must be a live handle, `target` a NUL-terminated string,
 `out` writable.
 */
enum MqttprobeStatus mqttprobe_run(const struct MqttprobeExperiment *experiment,
                                   const char *target,
                                   struct MqttprobeTrace **out);

/*
 Read a trace from its JSONL form.

 # Safety
 `jsonl` must be a NUL-terminated string; `out` must be writable.
 */
enum MqttprobeStatus mqttprobe_trace_parse(const char *jsonl, struct MqttprobeTrace **out);

/*
 # Safety
 `trace` must be a live handle.
 */
enum MqttprobeOutcome mqttprobe_trace_outcome(const struct MqttprobeTrace *trace);

/*
 # Safety
 `trace` must be NULL or a live handle.
 */
uintptr_t mqttprobe_trace_event_count(const struct MqttprobeTrace *trace);

/*
 JSONL form of the trace; free with `mqttprobe_string_free`.

 # Safety
 `trace` must be a live handle; `out` must be writable.
 */
enum MqttprobeStatus mqttprobe_trace_to_jsonl(const struct MqttprobeTrace *trace, char **out);

/*
 # Safety
 `trace` must be NULL or a handle not yet freed.
 */
void mqttprobe_trace_free(struct MqttprobeTrace *trace);

/*
 Evaluate a trace of `experiment`.

 # Safety
 Both handles must be live; `out` must be writable.
 */
enum MqttprobeStatus mqttprobe_evaluate(const struct MqttprobeExperiment *experiment,
                                        const struct MqttprobeTrace *trace,
                                        struct MqttprobeEvaluation **out);

/*
 # Safety
 `evaluation` must be NULL or a live handle.
 */
uintptr_t mqttprobe_evaluation_anomaly_count(const struct MqttprobeEvaluation *evaluation);

/*
 # Safety
 `evaluation` must be a live handle; `out` must be writable.
 */
enum MqttprobeStatus mqttprobe_evaluation_anomaly(const struct MqttprobeEvaluation *evaluation,
                                                  uintptr_t index,
                                                  enum MqttprobeAnomaly *out);

/*
 Highest severity found, `MQTTPROBE_SEVERITY_NONE` when clean.

 # Safety
 `evaluation` must be NULL or a live handle.
 */
enum MqttprobeSeverity mqttprobe_evaluation_max_severity(const struct MqttprobeEvaluation *evaluation);

/*
 Number of messages delivered to subscribers during the run.

 # Safety
 `evaluation` must be NULL or a live handle.
 */
uintptr_t mqttprobe_evaluation_delivered(const struct MqttprobeEvaluation *evaluation);

/*
 Full verdict as JSON; free with `mqttprobe_string_free`.

 # Safety
 `evaluation` must be a live handle; `out` must be writable.
 */
enum MqttprobeStatus mqttprobe_evaluation_to_json(const struct MqttprobeEvaluation *evaluation,
                                                  char **out);

/*
 # Safety
 `evaluation` must be NULL or a handle not yet freed.
 */
void mqttprobe_evaluation_free(struct MqttprobeEvaluation *evaluation);

/*
 Divergences between two documented broker profiles as a JSON array.

 # Safety
 `a` and `b` must be NUL-terminated strings; `out` must be writable.
 */
enum MqttprobeStatus mqttprobe_diff_documented(const char *a, const char *b, char **out);

/*
 Decode the frame at the start of `buf` to packet JSON. `strict` nonzero
 rejects protocol violations. `consumed` receives the frame length.

 # Safety
 `buf` must point to `len` readable bytes; `consumed` and `out` must be writable.
 */
enum MqttprobeStatus mqttprobe_decode(const uint8_t *buf,
                                      uintptr_t len,
                                      int32_t strict,
                                      uintptr_t *consumed,
                                      char **out);

/*
 Encode packet JSON (as produced by `mqttprobe_decode`'s `packet` field) to
 wire bytes; free with `mqttprobe_bytes_free`.

 # Safety
 `packet_json` must be a NUL-terminated string; `out` and `out_len` must be writable.
 */
enum MqttprobeStatus mqttprobe_encode(const char *packet_json, uint8_t **out, uintptr_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MQTTPROBE_H */

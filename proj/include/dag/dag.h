/* C interface to the dag library. All strings are UTF-8 and NUL-terminated.
 * Functions returning dag_status leave a message for dag_last_error() on
 * failure; the message is per thread and valid until the next failing call. */
#ifndef DAG_DAG_H
#define DAG_DAG_H

#include <stddef.h>

#if defined(_WIN32)
#define DAG_API __declspec(dllexport)
#else
#define DAG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dag_status {
    DAG_OK = 0,
    DAG_ERR_INTERNAL = 1,
    DAG_ERR_CONFIG = 2,
    DAG_ERR_MISSING_INPUT = 3,
    DAG_ERR_ACCEPTANCE = 4,
    DAG_ERR_INVALID_ARGUMENT = 10,
    DAG_ERR_DEGENERATE_SHAPE = 11,
    DAG_ERR_ALIGNMENT_DEGENERATE = 12,
    DAG_ERR_SINGULAR_CONFIGURATION = 13,
    DAG_ERR_NO_NEIGHBOR = 14,
    DAG_ERR_DEGENERATE_VECTOR = 15,
    DAG_ERR_INSUFFICIENT_PAIRS = 16,
    DAG_ERR_IO = 17,
    DAG_ERR_CACHE = 18,
    DAG_ERR_NON_FINITE_LOSS = 19,
    DAG_ERR_BUFFER_TOO_SMALL = 20
} dag_status;

typedef struct dag_config dag_config;

DAG_API const char* dag_version(void);
DAG_API const char* dag_status_name(dag_status status);
DAG_API const char* dag_last_error(void);

/* Process exit code for a status: 0, 2 (config), 3 (missing input),
 * 4 (acceptance) or 1 for everything else. */
DAG_API int dag_exit_code(dag_status status);

DAG_API dag_status dag_config_load(const char* path, dag_config** out);
DAG_API dag_status dag_config_parse(const char* yaml_text, dag_config** out);
/* Applies one "section.key=value" override. The handle is unchanged on error. */
DAG_API dag_status dag_config_set(dag_config* cfg, const char* assignment);
DAG_API void dag_config_free(dag_config* cfg);

/* String getters copy into buf (capacity cap, NUL included) and report the
 * required capacity through needed when it is non-null. A short buffer gives
 * DAG_ERR_BUFFER_TOO_SMALL. */
DAG_API dag_status dag_config_hash(const dag_config* cfg, char* buf, size_t cap, size_t* needed);
DAG_API dag_status dag_config_run_dir(const dag_config* cfg, char* buf, size_t cap, size_t* needed);
DAG_API dag_status dag_config_canonical(const dag_config* cfg, char* buf, size_t cap, size_t* needed);

/* Runs gen-data, pair, train, eval, sweep or gradcheck. The one-line summary
 * is copied into summary when it is non-null; a short buffer truncates it. */
DAG_API dag_status dag_run_command(const dag_config* cfg, const char* command, char* summary, size_t cap);

#ifdef __cplusplus
}
#endif

#endif

/* C interface to the harl library. Objects are opaque handles; every call
 * returns a status code and the message of the last failure on the calling
 * thread is available from harl_last_error(). Strings returned through
 * `char**` outputs are owned by the caller and released with
 * harl_string_free(). */
#ifndef HARL_H
#define HARL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HARL_API __declspec(dllexport)
#elif defined(HARL_BUILDING_LIBRARY)
#define HARL_API __attribute__((visibility("default")))
#else
#define HARL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum harl_status {
  HARL_OK = 0,
  HARL_ERR_INVALID_ARGUMENT = 1,
  HARL_ERR_CONFIG = 2,
  HARL_ERR_NUMERIC = 3,
  HARL_ERR_CONVERGENCE = 4,
  HARL_ERR_CHECK_FAILED = 5, /* the command ran but its check did not hold */
  HARL_ERR_IO = 6,
  HARL_ERR_INTERNAL = 7
} harl_status;

typedef struct harl_game harl_game;
typedef struct harl_policy harl_policy;
typedef struct harl_trainer harl_trainer;

HARL_API const char* harl_version(void);
HARL_API const char* harl_last_error(void);
HARL_API const char* harl_status_name(harl_status status);
HARL_API void harl_string_free(char* s);

/* Tabular games. env_json is an environment document such as
 * {"name": "xor", "n": 4}. */
HARL_API harl_status harl_game_create(const char* env_json, harl_game** out);
HARL_API harl_status harl_game_load(const char* path, harl_game** out);
HARL_API void harl_game_destroy(harl_game* game);
HARL_API harl_status harl_game_info(const harl_game* game, int* n_agents, int* n_states,
                                    int* n_joint, double* gamma);
HARL_API harl_status harl_game_n_actions(const harl_game* game, int agent, int* out);
HARL_API harl_status harl_game_to_json(const harl_game* game, char** out);
/* Team optimum by value iteration. */
HARL_API harl_status harl_game_optimal_return(const harl_game* game, double* out);

/* Per-agent tabular policies. */
HARL_API harl_status harl_policy_uniform(const harl_game* game, harl_policy** out);
/* One joint action index per state. */
HARL_API harl_status harl_policy_deterministic(const harl_game* game, const int* joint_actions,
                                               harl_policy** out);
HARL_API harl_status harl_policy_from_json(const harl_game* game, const char* json,
                                           harl_policy** out);
HARL_API harl_status harl_policy_to_json(const harl_policy* policy, char** out);
HARL_API void harl_policy_destroy(harl_policy* policy);
/* pi^agent(a | s). */
HARL_API harl_status harl_policy_prob(const harl_policy* policy, int agent, int state,
                                      int action, double* out);

HARL_API harl_status harl_evaluate(const harl_game* game, const harl_policy* policy,
                                   double* J);
/* gaps must hold n_agents entries. */
HARL_API harl_status harl_best_response_gaps(const harl_game* game, const harl_policy* policy,
                                             double* gaps, int n_gaps);
/* Runs exact sequential policy iteration in place; J_trace receives
 * rounds + 1 values when not null. */
HARL_API harl_status harl_policy_iteration(const harl_game* game, harl_policy* policy, int rounds,
                                           uint64_t seed, double* J_trace);

/* Sample-based trainers (on- or off-policy, chosen by the algorithm name in
 * train_json). */
HARL_API harl_status harl_trainer_create(const char* env_json, const char* train_json,
                                         uint64_t seed, harl_trainer** out);
HARL_API void harl_trainer_destroy(harl_trainer* trainer);
/* Trains to completion. result_json gets the final return, the exact return
 * where available and the CSV curve. */
HARL_API harl_status harl_trainer_run(harl_trainer* trainer, char** result_json);

/* Command front end. Reports are JSON documents; a failed check returns
 * HARL_ERR_CHECK_FAILED with the report still filled in. seeds may be null
 * to keep the seeds of the config file. */
HARL_API harl_status harl_cmd_train(const char* config_path, const uint64_t* seeds,
                                    size_t n_seeds, const char* out_dir, char** report);
HARL_API harl_status harl_cmd_exact_iter(const char* config_path, const char* out_dir,
                                         char** report);
/* which: example2, xor, diffgame. n <= 0 runs the default agent counts. */
HARL_API harl_status harl_cmd_repro(const char* which, int n, char** report);
HARL_API harl_status harl_cmd_verify_ne(const char* config_path, const char* policy_path,
                                        double tolerance, char** report);
/* suites: comma-separated names, empty or "all" for every suite. */
HARL_API harl_status harl_cmd_props(const char* suites, uint64_t seed, char** report);
HARL_API harl_status harl_cmd_export_game(const char* config_path, const char* out_path,
                                          char** report);

#ifdef __cplusplus
}
#endif

#endif

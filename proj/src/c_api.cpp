#include "dag/dag.h"

#include "common.hpp"
#include "config.hpp"
#include "pipeline.hpp"
#include "text_io.hpp"

#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

struct dag_config {
    std::string yaml;
    std::vector<std::string> overrides;
    dag::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

dag_status fail(dag_status s, std::string msg) {
    g_last_error = std::move(msg);
    return s;
}

template <class F>
dag_status guarded(F&& f) {
    try {
        return f();
    } catch (const dag::Error& e) {
        return fail(static_cast<dag_status>(e.code()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(DAG_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(DAG_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(DAG_ERR_INTERNAL, "unknown exception");
    }
}

dag_status copy_out(const std::string& s, char* buf, std::size_t cap, std::size_t* needed) {
    if (needed) *needed = s.size() + 1;
    if (!buf || cap < s.size() + 1) return fail(DAG_ERR_BUFFER_TOO_SMALL, "buffer too small");
    std::memcpy(buf, s.c_str(), s.size() + 1);
    return DAG_OK;
}

dag_status make_config(std::string yaml, dag_config** out) {
    if (!out) return fail(DAG_ERR_INVALID_ARGUMENT, "null output handle");
    *out = nullptr;
    auto* h = new dag_config{std::move(yaml), {}, {}};
    try {
        h->cfg = dag::parse_config(h->yaml);
    } catch (...) {
        delete h;
        throw;
    }
    *out = h;
    return DAG_OK;
}

}  // namespace

extern "C" {

const char* dag_version(void) { return "0.1.0"; }

const char* dag_status_name(dag_status status) {
    if (status == DAG_OK) return "ok";
    if (status == DAG_ERR_BUFFER_TOO_SMALL) return "buffer_too_small";
    return dag::error_code_name(static_cast<dag::ErrorCode>(status));
}

const char* dag_last_error(void) { return g_last_error.c_str(); }

int dag_exit_code(dag_status status) {
    switch (status) {
        case DAG_OK: return 0;
        case DAG_ERR_CONFIG: return 2;
        case DAG_ERR_MISSING_INPUT: return 3;
        case DAG_ERR_ACCEPTANCE: return 4;
        default: return 1;
    }
}

dag_status dag_config_load(const char* path, dag_config** out) {
    return guarded([&] {
        if (!path) return fail(DAG_ERR_INVALID_ARGUMENT, "null path");
        if (!std::filesystem::exists(path))
            return fail(DAG_ERR_MISSING_INPUT, std::string("config file not found: ") + path);
        return make_config(dag::read_text(path), out);
    });
}

dag_status dag_config_parse(const char* yaml_text, dag_config** out) {
    return guarded([&] {
        if (!yaml_text) return fail(DAG_ERR_INVALID_ARGUMENT, "null config text");
        return make_config(yaml_text, out);
    });
}

dag_status dag_config_set(dag_config* cfg, const char* assignment) {
    return guarded([&] {
        if (!cfg || !assignment) return fail(DAG_ERR_INVALID_ARGUMENT, "null argument");
        auto overrides = cfg->overrides;
        overrides.emplace_back(assignment);
        cfg->cfg = dag::parse_config(cfg->yaml, overrides);
        cfg->overrides = std::move(overrides);
        return DAG_OK;
    });
}

void dag_config_free(dag_config* cfg) { delete cfg; }

dag_status dag_config_hash(const dag_config* cfg, char* buf, size_t cap, size_t* needed) {
    return guarded([&] {
        if (!cfg) return fail(DAG_ERR_INVALID_ARGUMENT, "null config");
        return copy_out(cfg->cfg.hash(), buf, cap, needed);
    });
}

dag_status dag_config_run_dir(const dag_config* cfg, char* buf, size_t cap, size_t* needed) {
    return guarded([&] {
        if (!cfg) return fail(DAG_ERR_INVALID_ARGUMENT, "null config");
        return copy_out(cfg->cfg.run_dir().string(), buf, cap, needed);
    });
}

dag_status dag_config_canonical(const dag_config* cfg, char* buf, size_t cap, size_t* needed) {
    return guarded([&] {
        if (!cfg) return fail(DAG_ERR_INVALID_ARGUMENT, "null config");
        return copy_out(cfg->cfg.canonical(), buf, cap, needed);
    });
}

dag_status dag_run_command(const dag_config* cfg, const char* command, char* summary, size_t cap) {
    return guarded([&] {
        if (!cfg || !command) return fail(DAG_ERR_INVALID_ARGUMENT, "null argument");
        const std::string s = dag::run_command(command, cfg->cfg);
        if (summary && cap > 0) {
            const std::size_t n = std::min(cap - 1, s.size());
            std::memcpy(summary, s.data(), n);
            summary[n] = '\0';
        }
        return DAG_OK;
    });
}

}  // extern "C"

#pragma once
#include <radiant/probes.hpp>
#include <radiant/sdp.hpp>
#include <radiant/simbench.hpp>
#include <radiant/steering.hpp>

#include <json.hpp>

namespace radiant::jsonio {

nlohmann::json rates(const Rates& r);
nlohmann::json probe_report(const ProbeReport& r);
nlohmann::json eval_report(const EvalReport& r);
nlohmann::json grid_result(const GridResult& g);
nlohmann::json bundle_summary(const PolicyBundle& b);

template <class T>
nlohmann::json optional_value(const std::optional<T>& v)
{
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

} // namespace radiant::jsonio

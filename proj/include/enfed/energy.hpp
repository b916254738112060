#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace enfed {

enum class Phase { Init, Send, Recv, LocalTrain, Aggregate };

// Per-phase power draw in watts. The uniform 5 W default is the constant
// implied by the reference measurements this model is calibrated against
// (e.g. 38.05 J over 7.61 s); any phase can be overridden in configuration.
struct PowerProfile {
    double p_init = 5.0;
    double p_local = 5.0;
    double p_agg = 5.0;
    double p_send = 5.0;
    double p_recv = 5.0;

    double watts(Phase phase) const {
        switch (phase) {
            case Phase::Init: return p_init;
            case Phase::Send: return p_send;
            case Phase::Recv: return p_recv;
            case Phase::LocalTrain: return p_local;
            case Phase::Aggregate: return p_agg;
        }
        throw std::invalid_argument("PowerProfile: unknown phase");
    }
};

// Per-phase time and energy accumulators for one device.
// e_comp = p_init*t_init + p_local*t_loc + p_agg*t_agg
// e_comm = p_send*t_com1 + p_recv*t_com2
struct EnergyLedger {
    double t_init = 0.0;
    double t_com1 = 0.0;  // transmission
    double t_com2 = 0.0;  // reception
    double t_loc = 0.0;
    double t_agg = 0.0;
    double e_comp = 0.0;
    double e_comm = 0.0;

    void charge(Phase phase, double duration_s, const PowerProfile& profile) {
        if (!(duration_s >= 0.0) || !std::isfinite(duration_s))
            throw std::invalid_argument("EnergyLedger::charge: negative or non-finite duration");
        const double joules = duration_s * profile.watts(phase);
        switch (phase) {
            case Phase::Init:
                t_init += duration_s;
                e_comp += joules;
                break;
            case Phase::Send:
                t_com1 += duration_s;
                e_comm += joules;
                break;
            case Phase::Recv:
                t_com2 += duration_s;
                e_comm += joules;
                break;
            case Phase::LocalTrain:
                t_loc += duration_s;
                e_comp += joules;
                break;
            case Phase::Aggregate:
                t_agg += duration_s;
                e_comp += joules;
                break;
        }
    }

    double total_time() const { return t_init + t_com1 + t_com2 + t_loc + t_agg; }
    double total_energy() const { return e_comp + e_comm; }
};

inline double total_energy(const EnergyLedger& ledger) { return ledger.total_energy(); }

struct BatteryState {
    double capacity_j = 10000.0;
    double initial_percent = 80.0;
};

// Linear depletion: percent lost is proportional to energy drawn, clamped to
// [0, 100].
inline double battery_after(const BatteryState& battery, const EnergyLedger& ledger) {
    if (!(battery.capacity_j > 0.0))
        throw std::invalid_argument("battery_after: capacity must be positive");
    const double pct = battery.initial_percent - 100.0 * ledger.total_energy() / battery.capacity_j;
    return std::min(100.0, std::max(0.0, pct));
}

enum class BatteryDecision { Continue, StopNow };

// StopNow iff the projected level is strictly below the threshold.
inline BatteryDecision check_battery_level(const BatteryState& battery,
                                           const EnergyLedger& ledger, double min_percent) {
    return battery_after(battery, ledger) < min_percent ? BatteryDecision::StopNow
                                                        : BatteryDecision::Continue;
}

// Analytic cost model for simulated durations. The rates are configuration:
// the shapes (linear in epochs, minibatches, weights, models, bytes) are what
// matters for comparisons, not the absolute constants.
struct CostModel {
    double init_s = 0.01;          // constant-time model install
    double local_rate = 2e-7;      // s per (minibatch x weight) of training
    double agg_rate = 5e-8;        // s per (model x weight) averaged
    double infer_rate = 2e-8;      // s per (row x weight) of inference
    double proc_delay_s = 0.005;   // collaborator message-handling delay
};

struct PhaseWork {
    Phase phase = Phase::Init;
    double epochs = 0.0;
    double rows = 0.0;
    double batch = 1.0;
    double weights = 0.0;
    double models = 0.0;
    double bytes = 0.0;
    double bandwidth_bps = std::numeric_limits<double>::infinity();
};

inline double simulated_duration(const CostModel& cost, const PhaseWork& work) {
    switch (work.phase) {
        case Phase::Init:
            return cost.init_s;
        case Phase::LocalTrain: {
            if (work.batch <= 0) throw std::invalid_argument("simulated_duration: batch must be > 0");
            const double minibatches = std::ceil(work.rows / work.batch);
            return cost.local_rate * work.epochs * minibatches * work.weights;
        }
        case Phase::Aggregate:
            return cost.agg_rate * work.models * work.weights;
        case Phase::Send:
        case Phase::Recv:
            if (std::isinf(work.bandwidth_bps)) return 0.0;
            if (!(work.bandwidth_bps > 0))
                throw std::invalid_argument("simulated_duration: bandwidth must be > 0");
            return work.bytes / work.bandwidth_bps;
    }
    throw std::invalid_argument("simulated_duration: unknown phase");
}

inline double inference_duration(const CostModel& cost, double rows, double weights) {
    return cost.infer_rate * rows * weights;
}

enum class ClockMode { Simulated, Wall };

// A device's complete timing/energy environment.
struct DeviceEnv {
    PowerProfile power;
    CostModel cost;
    ClockMode clock = ClockMode::Simulated;
};

// Runs the work and returns its duration: analytic in Simulated mode (the
// deterministic path), measured wall time otherwise.
template <class F>
double measure_phase(ClockMode mode, const CostModel& cost, const PhaseWork& work, F&& fn) {
    if (mode == ClockMode::Simulated) {
        const double d = simulated_duration(cost, work);
        std::forward<F>(fn)();
        return d;
    }
    const auto start = std::chrono::steady_clock::now();
    std::forward<F>(fn)();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(stop - start).count();
}

}  // namespace enfed

use serde::{Deserialize, Serialize};

use crate::hub::{storage_step, HubParameters, HubState, StepSetPoint, Tariffs};

/// Violation amounts below this (kWh) are treated as numerical noise.
pub const VIOLATION_TOL: f64 = 1e-6;

/// Flows actually realized in one hour.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RealizedStep {
    pub grid_buy: f64,
    pub grid_sell: f64,
    pub es_discharge: f64,
    pub es_charge: f64,
    pub es_level: f64,
    pub ts_discharge: f64,
    pub ts_charge: f64,
    pub ts_level: f64,
    /// Heat demand the TS could not serve at its lower bound (kWh).
    pub unserved_heat: f64,
    /// Surplus heat the TS could not take at its upper bound (kWh).
    pub dumped_heat: f64,
    /// Distance the TS level would have crossed its bound (kWh of stored energy).
    pub violation_kwh: f64,
    pub cost: f64,
    /// Electric ledger residual (supply minus use).
    pub residual_e: f64,
    pub residual_h: f64,
    /// Total supply-side energy of the hour, both carriers (kWh).
    pub throughput: f64,
}

impl RealizedStep {
    pub fn violated(&self) -> bool {
        self.violation_kwh > VIOLATION_TOL
    }
}

/// ES flows giving a level inside the bounds. The planned flows are kept when
/// they already do; otherwise the single flow reaching the nearest bound.
fn es_flows(sp: &StepSetPoint, level: f64, p: &HubParameters) -> (f64, f64, f64) {
    let next = storage_step(level, sp.es_discharge, sp.es_charge, p.eta_es, p.gamma_es, p.dt);
    if next >= p.es_min - VIOLATION_TOL && next <= p.es_max + VIOLATION_TOL {
        return (sp.es_discharge, sp.es_charge, next.clamp(p.es_min, p.es_max));
    }
    let target = next.clamp(p.es_min, p.es_max);
    let delta = target - p.gamma_es * level;
    if delta >= 0.0 {
        (0.0, delta / (p.eta_es * p.dt), target)
    } else {
        (-delta * p.eta_es / p.dt, 0.0, target)
    }
}

/// Applies first-hour set points against the true demand. The grid settles
/// the electric imbalance; the TS settles the heat imbalance up to its bounds
/// and whatever remains is recorded as unserved or dumped heat.
pub fn realize_step(
    applied: &StepSetPoint,
    load_e: f64,
    load_h: f64,
    state: &HubState,
    params: &HubParameters,
    tariffs: &Tariffs,
) -> (RealizedStep, HubState) {
    let p = params;
    let dt = p.dt;
    let (es_dis, es_ch, es_level) = es_flows(applied, state.es_level, p);

    let net_e = applied.p_pv + applied.p_chp - applied.p_hp + es_dis - es_ch - load_e;
    let (buy, sell) = if net_e >= 0.0 { (0.0, net_e) } else { (-net_e, 0.0) };

    let heat = applied.q_gb + applied.q_chp + applied.q_hp;
    let decayed = p.gamma_ts * state.ts_level;
    let deficit = load_h - heat;
    let mut r = RealizedStep::default();
    if deficit > 0.0 {
        let room = ((decayed - p.ts_min) * p.eta_ts / dt).max(0.0);
        r.ts_discharge = deficit.min(room);
        r.unserved_heat = deficit - r.ts_discharge;
        r.violation_kwh = r.unserved_heat * dt / p.eta_ts;
    } else {
        let room = ((p.ts_max - decayed) / (p.eta_ts * dt)).max(0.0);
        r.ts_charge = (-deficit).min(room);
        r.dumped_heat = -deficit - r.ts_charge;
        r.violation_kwh = r.dumped_heat * p.eta_ts * dt;
    }
    let mut ts_level = storage_step(state.ts_level, r.ts_discharge, r.ts_charge, p.eta_ts, p.gamma_ts, dt);
    // standing losses alone can cross a positive lower bound
    if ts_level < p.ts_min {
        r.violation_kwh += p.ts_min - ts_level;
    }
    ts_level = ts_level.clamp(p.ts_min, p.ts_max);

    let prices = tariffs.at(state.clock);
    r.grid_buy = buy;
    r.grid_sell = sell;
    r.es_discharge = es_dis;
    r.es_charge = es_ch;
    r.es_level = es_level;
    r.ts_level = ts_level;
    r.cost = (prices.buy * buy - prices.sell * sell + prices.gas * (applied.f_chp + applied.f_gb)) * dt;
    let supply_e = applied.p_pv + applied.p_chp + es_dis + buy;
    let supply_h = heat + r.ts_discharge + r.unserved_heat;
    r.residual_e = supply_e - (load_e + applied.p_hp + es_ch + sell);
    r.residual_h = supply_h - (load_h + r.ts_charge + r.dumped_heat);
    r.throughput = supply_e + supply_h;
    let next = HubState { es_level, ts_level, clock: state.clock + 1 };
    (r, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sp_heat(q_gb: f64) -> StepSetPoint {
        let p = HubParameters::reference();
        StepSetPoint {
            chp_weights: [1.0, 0.0, 0.0, 0.0],
            p_chp: p.chp_p[0],
            q_chp: p.chp_q[0],
            f_chp: p.chp_p[0] / p.eta_chp,
            q_gb: q_gb,
            f_gb: q_gb / p.eta_gb,
            es_charge: 0.05,
            ..Default::default()
        }
    }

    #[test]
    fn deficit_with_empty_storage_is_unserved() {
        let p = HubParameters::reference();
        let st = HubState { es_level: 100.0, ts_level: 0.0, clock: 0 };
        let (r, next) = realize_step(&sp_heat(50.0), 150.0, 60.0, &st, &p, &Tariffs::illustrative());
        assert!((r.unserved_heat - 10.0).abs() < 1e-12);
        assert!(r.violated());
        assert_eq!(next.ts_level, 0.0);
        assert!(r.residual_h.abs() < 1e-12);
    }

    #[test]
    fn surplus_charges_storage_then_dumps() {
        let p = HubParameters::reference();
        let st = HubState { es_level: 100.0, ts_level: 4790.0, clock: 0 };
        let (r, next) = realize_step(&sp_heat(100.0), 150.0, 20.0, &st, &p, &Tariffs::illustrative());
        assert!((next.ts_level - 4800.0).abs() < 1e-9);
        assert!(r.dumped_heat > 0.0 && r.ts_charge > 0.0);
        assert!((r.ts_charge + r.dumped_heat - 80.0).abs() < 1e-12);
    }

    #[test]
    fn es_guard_keeps_level_in_bounds() {
        let p = HubParameters::reference();
        let mut sp = sp_heat(0.0);
        sp.es_discharge = 500.0;
        sp.es_charge = 0.0;
        let st = HubState { es_level: 60.0, ts_level: 100.0, clock: 0 };
        let (r, next) = realize_step(&sp, 150.0, 0.0, &st, &p, &Tariffs::illustrative());
        assert!((next.es_level - p.es_min).abs() < 1e-12);
        assert!(r.es_discharge < 20.0);
        assert!(r.residual_e.abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn ledger_closes(q_gb in 0.0f64..120.0, le in 0.0f64..600.0, lh in 0.0f64..800.0,
                         ts in 0.0f64..4800.0, es in 40.0f64..250.0, w in 0.0f64..1.0) {
            let p = HubParameters::reference();
            let mut sp = sp_heat(q_gb);
            sp.chp_weights = [1.0 - w, 0.0, w, 0.0];
            sp.p_chp = (1.0 - w) * p.chp_p[0] + w * p.chp_p[2];
            sp.q_chp = w * p.chp_q[2];
            sp.f_chp = sp.p_chp / p.eta_chp;
            let st = HubState { es_level: es, ts_level: ts, clock: 3 };
            let (r, next) = realize_step(&sp, le, lh, &st, &p, &Tariffs::illustrative());
            prop_assert!(r.residual_e.abs() < 1e-9 * (1.0 + r.throughput));
            prop_assert!(r.residual_h.abs() < 1e-9 * (1.0 + r.throughput));
            prop_assert!(next.ts_level >= p.ts_min && next.ts_level <= p.ts_max);
            prop_assert!(next.es_level >= p.es_min && next.es_level <= p.es_max);
            prop_assert!(r.grid_buy * r.grid_sell == 0.0 && r.ts_charge * r.ts_discharge == 0.0);
            prop_assert!(r.unserved_heat * r.dumped_heat == 0.0);
        }
    }
}

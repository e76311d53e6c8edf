//! Converter and storage models of the reference hub, one hour at a time.

use ehub::hub::{
    balance_residuals, chp_output, hp_gb_output, pv_output, stage_cost, storage_step, HubParameters, HubState,
    StepRecourse, StepSetPoint, Tariffs,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = HubParameters::reference();
    params.validate()?;
    let tariffs = Tariffs::illustrative();

    // halfway between the second and third CHP vertex
    let w = [0.0, 0.5, 0.5, 0.0];
    let (p_chp, q_chp, f_chp) = chp_output(w, &params)?;
    println!("CHP: {p_chp:.1} kW el, {q_chp:.1} kW th, {f_chp:.1} kW fuel");

    let (q_hp, f_gb) = hp_gb_output(40.0, 50.0, &params)?;
    println!("heat pump 40 kW el -> {q_hp:.1} kW th; boiler heat 50 kW needs {f_gb:.1} kW gas");

    let p_pv = pv_output(0.6, &params)?;
    println!("PV at 0.6 kW/m2: {p_pv:.1} kW");

    let state = HubState::initial(&params, 0);
    let es_next = storage_step(state.es_level, 0.0, 30.0, params.eta_es, params.gamma_es, params.dt);
    println!("ES {:.1} -> {es_next:.2} kWh after charging 30 kW for an hour", state.es_level);

    let sp = StepSetPoint {
        p_pv,
        chp_weights: w,
        p_chp,
        q_chp,
        f_chp,
        p_hp: 40.0,
        q_hp,
        q_gb: 50.0,
        f_gb,
        es_charge: 30.0,
        es_level: es_next,
        ..Default::default()
    };
    let load_e = 250.0;
    let load_h = q_chp + q_hp + 50.0 - 20.0;
    let used_e = load_e + sp.p_hp + sp.es_charge;
    let supplied_e = sp.p_pv + sp.p_chp;
    let rec = StepRecourse {
        grid_buy: (used_e - supplied_e).max(0.0),
        grid_sell: (supplied_e - used_e).max(0.0),
        ts_charge: 20.0,
        ts_level: storage_step(state.ts_level, 0.0, 20.0, params.eta_ts, params.gamma_ts, params.dt),
        ..Default::default()
    };
    let (re, rh) = balance_residuals(&sp, &rec, load_e, load_h);
    println!("balance residuals: electric {re:.2e}, heat {rh:.2e}");
    println!("stage cost: {:.2} CHF", stage_cost(&sp, &rec, tariffs.at(0), params.dt));
    Ok(())
}

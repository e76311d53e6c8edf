//! Plan the hub for the next hours against sampled demand scenarios.

use chrono::NaiveDate;
use ehub::forecast::{FitOptions, ModelSet, Season, SeasonTable};
use ehub::hub::{HubParameters, HubState, Tariffs};
use ehub::mpc::{solve_scenarios, SolveOptions, SpConfig};
use ehub::sampler::{sample_trajectories, SamplerConfig, WeatherForecast};
use ehub::sim::{generate_synthetic_data, SyntheticDataConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let data = generate_synthetic_data(&SyntheticDataConfig { start, hours: 30 * 24, seed: 4, ..Default::default() })?;
    let fit = FitOptions { restarts: 1, max_train_rows: 120, window_hours: 240, ..Default::default() };
    let mut models = ModelSet::train(&data.slice(0, 20 * 24), Some(&[Season::Winter]), &fit, &SeasonTable::default())?;

    let at = data.start_hour() + 20 * 24 + 6;
    models.refresh_season(Season::Winter, &data, at, 240)?;
    let weather = WeatherForecast::from_history(&data, at, 12)?;
    let scenarios = sample_trajectories(
        models.predictors(Season::Winter)?,
        &data,
        at,
        &weather,
        &SamplerConfig { m: 10, horizon: 12, seed: 7, ..Default::default() },
    )?
    .samples;

    let params = HubParameters::reference();
    let tariffs = Tariffs::illustrative();
    let state = HubState::initial(&params, at);
    let sp = SpConfig { horizon: 12, ..Default::default() };
    let sol = solve_scenarios(&state, &params, &tariffs, &weather.irradiance, &scenarios, &sp, &SolveOptions::default())?;

    println!(
        "status {:?}: mean cost {:.2} CHF over {} scenarios, slack {:.2} kWh, {} B&B nodes",
        sol.status,
        sol.mean_cost,
        scenarios.len(),
        sol.slack_sum(),
        sol.stats.nodes
    );
    println!("hour  P_chp  Q_chp   P_hp   Q_gb   ES_in  ES_out  ES_level");
    for (h, s) in sol.set_points.steps.iter().enumerate() {
        println!(
            "{h:>4} {:>6.1} {:>6.1} {:>6.1} {:>6.1} {:>7.1} {:>7.1} {:>9.1}",
            s.p_chp, s.q_chp, s.p_hp, s.q_gb, s.es_charge, s.es_discharge, s.es_level
        );
    }
    Ok(())
}

//! Support subsample and violation level of a scenario plan, compared with
//! the violation rate on fresh scenarios.

use chrono::NaiveDate;
use ehub::forecast::{FitOptions, ModelSet, Season, SeasonTable};
use ehub::guarantees::{certify, empirical_violation, GuaranteeConfig, SpInstance};
use ehub::hub::{HubParameters, HubState, Tariffs};
use ehub::mpc::{solve_scenarios, SolveOptions, SpConfig};
use ehub::sampler::{sample_trajectories, SamplerConfig, WeatherForecast};
use ehub::sim::{generate_synthetic_data, SyntheticDataConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let data = generate_synthetic_data(&SyntheticDataConfig { start, hours: 30 * 24, seed: 8, ..Default::default() })?;
    let fit = FitOptions { restarts: 1, max_train_rows: 120, window_hours: 240, ..Default::default() };
    let mut models = ModelSet::train(&data.slice(0, 20 * 24), Some(&[Season::Winter]), &fit, &SeasonTable::default())?;
    let at = data.start_hour() + 22 * 24;
    models.refresh_season(Season::Winter, &data, at, 240)?;
    let pred = models.predictors(Season::Winter)?;
    let weather = WeatherForecast::from_history(&data, at, 6)?;
    let draw = |m, seed| sample_trajectories(pred, &data, at, &weather, &SamplerConfig { m, horizon: 6, seed, ..Default::default() });

    let params = HubParameters::reference();
    let tariffs = Tariffs::illustrative();
    // a nearly full TS makes the upper bound matter
    let state = HubState { ts_level: 0.97 * params.ts_max, ..HubState::initial(&params, at) };
    let sp = SpConfig { horizon: 6, ..Default::default() };
    let scenarios = draw(30, 1)?.samples;
    let sol = solve_scenarios(&state, &params, &tariffs, &weather.irradiance, &scenarios, &sp, &SolveOptions::default())?;

    let inst = SpInstance { state: &state, params: &params, tariffs: &tariffs, irradiance: &weather.irradiance, sp: &sp };
    let cert = certify(&inst, &sol, &scenarios, &GuaranteeConfig { beta: 1e-3, ..Default::default() })?;
    println!("support size {} of {}, removed {} scenarios, epsilon {:.4}", cert.s_star, cert.m, cert.removed_indices.len(), cert.epsilon);
    println!("{}", cert.statement);

    let fresh = draw(2000, 99)?.samples;
    println!(
        "violation rate on {} fresh scenarios: {:.4} (certified epsilon {:.4})",
        fresh.len(),
        empirical_violation(&sol, &fresh, state.ts_level, &params),
        cert.epsilon
    );
    Ok(())
}

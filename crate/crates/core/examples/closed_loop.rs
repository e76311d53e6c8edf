//! Receding-horizon simulation of the hub against realized demand, comparing
//! the perfect-demand, mean-forecast and scenario controllers.

use chrono::{Duration, NaiveDate};
use ehub::forecast::{FitOptions, ModelSet, Season, SeasonTable};
use ehub::hub::{HubParameters, Tariffs};
use ehub::sim::{generate_synthetic_data, run_arms, summarize, Controller, SimulationConfig, SyntheticDataConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let start = NaiveDate::from_ymd_opt(2020, 12, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let data = generate_synthetic_data(&SyntheticDataConfig { start, hours: 45 * 24, seed: 2, ..Default::default() })?;
    let fit = FitOptions { restarts: 1, max_train_rows: 150, window_hours: 336, ..Default::default() };
    let models = ModelSet::train(&data.slice(0, 31 * 24), Some(&[Season::Winter]), &fit, &SeasonTable::default())?;

    let from = start + Duration::days(31);
    let to = from + Duration::days(3);
    let mut arms = vec![
        SimulationConfig::new(from, to, Controller::PerfectDemand, 0),
        SimulationConfig::new(from, to, Controller::MeanForecast, 0),
    ];
    for m in [1, 5, 20] {
        arms.push(SimulationConfig::new(from, to, Controller::Scenario { m }, 1));
    }
    for a in &mut arms {
        a.sp.horizon = 12;
        a.window_hours = 336;
    }
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let params = HubParameters::reference();
    println!("{:<14} {:>10} {:>10} {:>12} {:>14}", "arm", "CHF/h", "violated h", "viol kWh", "ledger closure");
    for (cfg, trace) in arms.iter().zip(run_arms(&arms, &params, &Tariffs::illustrative(), &models, &data, jobs)) {
        let s = summarize(&trace?)?;
        println!(
            "{:<14} {:>10.3} {:>10} {:>12.1} {:>14.1e}",
            cfg.controller.label(),
            s.mean_cost_chf_per_h,
            s.violation_count,
            s.cumulative_violation_kwh,
            s.ledger_closure
        );
    }
    Ok(())
}

//! Train seasonal demand predictors on synthetic data, check one-step
//! accuracy and draw demand trajectories.

use chrono::NaiveDate;
use ehub::forecast::{evaluate_one_step, FitOptions, ModelSet, Season, SeasonTable};
use ehub::sampler::{mean_trajectory, sample_trajectories, SamplerConfig, WeatherForecast};
use ehub::sim::{generate_synthetic_data, SyntheticDataConfig};
use ehub::timeutil::hour_index;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let start = NaiveDate::from_ymd_opt(2020, 12, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let data = generate_synthetic_data(&SyntheticDataConfig { start, hours: 60 * 24, seed: 3, ..Default::default() })?;

    let train_end = 31 * 24;
    let fit = FitOptions { restarts: 2, max_train_rows: 200, window_hours: 504, ..Default::default() };
    let models = ModelSet::train(&data.slice(0, train_end), Some(&[Season::Winter]), &fit, &SeasonTable::default())?;
    for kind in [ehub::forecast::ModelKind::Electric, ehub::forecast::ModelKind::Heat] {
        let m = models.get(kind, Season::Winter)?;
        println!("{} model: noise variance {:.3}, signal {:.3}", kind.name(), m.hyperparameters().noise_variance, m.hyperparameters().rbf_signal_variance);
    }

    let from = data.start_hour() + train_end as i64;
    let report = evaluate_one_step(&models, &data, from, from + 14 * 24, 24, 504)?;
    for s in &report.stats {
        println!(
            "{}: {} one-step predictions, relative error quartiles {:.3} / {:.3} / {:.3}, 90% coverage {:.3}",
            s.kind.name(),
            s.count,
            s.rel_q25,
            s.rel_q50,
            s.rel_q75,
            s.coverage90
        );
    }

    let at = hour_index(NaiveDate::from_ymd_opt(2021, 1, 20).unwrap().and_hms_opt(0, 0, 0).unwrap());
    let mut models = models;
    models.refresh_season(Season::Winter, &data, at, 504)?;
    let pred = models.predictors(Season::Winter)?;
    let weather = WeatherForecast::from_history(&data, at, 24)?;
    let set = sample_trajectories(pred, &data, at, &weather, &SamplerConfig { m: 20, horizon: 24, seed: 1, ..Default::default() })?;
    let mean = mean_trajectory(pred, &data, at, &weather, 24)?;
    let k = data.index_of_hour(at).unwrap();
    println!("hour  actual_e  mean_e  min..max sampled_e");
    for h in (0..24).step_by(4) {
        let draws = set.samples.iter().map(|s| s.load_e[h]);
        let lo = draws.clone().fold(f64::INFINITY, f64::min);
        let hi = draws.fold(f64::NEG_INFINITY, f64::max);
        println!("{h:>4}  {:>8.1}  {:>6.1}  {lo:.1}..{hi:.1}", data.load_e[k + h], mean.load_e[h]);
    }
    Ok(())
}

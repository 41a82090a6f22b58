//! Synthetic IoT task generation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::{SimConfig, Span};
use crate::error::ConfigError;
use crate::rng::{derive_rng, stream, SimRng};
use crate::types::{Intensity, Task, TaskId};

fn sample(rng: &mut SimRng, span: Span) -> f64 {
    if span.max > span.min {
        rng.random_range(span.min..=span.max)
    } else {
        span.min
    }
}

/// Splits `total` into per-class counts proportional to `fractions`, handing
/// the rounding remainder to the largest fractional parts (earlier class wins ties).
pub fn class_counts(total: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact = fractions.map(|f| f * total as f64);
    let mut counts = exact.map(|x| x.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Generates the task stream of one run. Arrival times are sorted uniform
/// draws over `[0, horizon)`; valuations are left unset.
pub fn generate_workload(config: &SimConfig, rng: &mut SimRng) -> Result<Vec<Task>, ConfigError> {
    config.workload.validate()?;
    let wl = &config.workload;
    let total = config.task_count();
    if total == 0 {
        return Ok(Vec::new());
    }

    let counts = class_counts(total, wl.mix.fractions());
    let mut classes: Vec<Intensity> = Intensity::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&c, n)| std::iter::repeat_n(c, n))
        .collect();
    classes.shuffle(rng);

    let mut arrivals: Vec<f64> = (0..total).map(|_| rng.random::<f64>() * config.horizon).collect();
    arrivals.sort_by(f64::total_cmp);

    let devices = config.num_devices.max(1) as u32;
    let tasks = classes
        .into_iter()
        .zip(arrivals)
        .enumerate()
        .map(|(i, (class, arrival_time))| {
            let cycles_span = match class {
                Intensity::Lit => wl.lit_cycles,
                Intensity::Mit => wl.mit_cycles,
                Intensity::Hit => wl.hit_cycles,
            };
            let cycles = sample(rng, cycles_span);
            let base = cycles / wl.reference_cpu;
            Task {
                id: TaskId(i as u64),
                device: rng.random_range(0..devices),
                class,
                data_in: sample(rng, wl.data_in_mb),
                data_out: sample(rng, wl.data_out_mb),
                cycles,
                memory: sample(rng, wl.memory_mb),
                power: sample(rng, wl.power_w),
                td_max: base * sample(rng, wl.td_max_factor),
                deadline: wl.deadline_offset_s + base * sample(rng, wl.deadline_factor),
                value: None,
                arrival_time,
            }
        })
        .collect();
    Ok(tasks)
}

/// Workload of `config.seed` on its dedicated stream.
pub fn workload_for_seed(config: &SimConfig) -> Result<Vec<Task>, ConfigError> {
    generate_workload(config, &mut derive_rng(config.seed, stream::WORKLOAD))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::IntensityMix;
    use crate::rng::new_rng;

    fn cfg_with(devices: usize, rate: f64, horizon: f64) -> SimConfig {
        let mut cfg = SimConfig {
            num_devices: devices,
            horizon,
            ..SimConfig::default()
        };
        cfg.workload.arrival_rate = rate;
        cfg
    }

    #[test]
    fn hundred_tasks_split_40_30_30() {
        let cfg = cfg_with(10, 1.0, 10.0);
        let tasks = generate_workload(&cfg, &mut new_rng(3)).unwrap();
        assert_eq!(tasks.len(), 100);
        let count = |c| tasks.iter().filter(|t| t.class == c).count();
        assert_eq!(
            (count(Intensity::Lit), count(Intensity::Mit), count(Intensity::Hit)),
            (40, 30, 30)
        );
    }

    #[test]
    fn zero_tasks_is_empty() {
        let cfg = cfg_with(10, 1.0, 0.0);
        assert!(generate_workload(&cfg, &mut new_rng(3)).unwrap().is_empty());
    }

    #[test]
    fn same_seed_same_tasks() {
        let cfg = cfg_with(20, 0.5, 30.0);
        let a = generate_workload(&cfg, &mut new_rng(11)).unwrap();
        let b = generate_workload(&cfg, &mut new_rng(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn arrivals_sorted_and_values_unset() {
        let cfg = cfg_with(20, 0.5, 30.0);
        let tasks = workload_for_seed(&cfg).unwrap();
        assert!(tasks.windows(2).all(|w| w[0].arrival_time <= w[1].arrival_time));
        assert!(tasks.iter().all(|t| t.value.is_none() && t.validate().is_ok()));
        assert!(tasks.iter().all(|t| t.arrival_time < cfg.horizon));
    }

    #[test]
    fn bad_mix_is_config_error() {
        let mut cfg = cfg_with(10, 1.0, 10.0);
        cfg.workload.mix = IntensityMix {
            lit: 0.4,
            mit: 0.4,
            hit: 0.4,
        };
        assert!(matches!(
            generate_workload(&cfg, &mut new_rng(0)),
            Err(ConfigError::MixSum { .. })
        ));
    }

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(class_counts(10, [1.0 / 3.0; 3]), [4, 3, 3]);
        assert_eq!(class_counts(7, [0.5, 0.25, 0.25]), [3, 2, 2]);
        assert_eq!(class_counts(0, [0.4, 0.3, 0.3]), [0, 0, 0]);
    }
}

//! Four views, one set of hyperparameters: the real schedule re-pairs the
//! views randomly every iteration, the fake schedule keeps two fixed
//! independent pairs. Shows pairing statistics and the resulting errors.
//!
//! ```bash
//! cargo run --release --example multi_view_schedules
//! ```

use std::collections::HashMap;

use cotrain::config::{
    run_train, DataSource, DatasetConfig, ExperimentConfig, GeneratorSpec, ModelConfig, RunConfig,
    RunMode,
};
use cotrain::trainer::{HyperParams, ScheduleMode, TrainState};

fn config(schedule: ScheduleMode, tag: &str) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetConfig {
            source: DataSource::Generator(GeneratorSpec::TwoMoons {
                n: 2000,
                noise: 0.1,
                seed: 21,
            }),
            test: DataSource::Generator(GeneratorSpec::TwoMoons {
                n: 1000,
                noise: 0.1,
                seed: 921,
            }),
            n_labeled: 20,
            split_seed: 51,
        },
        model: ModelConfig {
            layer_dims: vec![2, 32, 32, 2],
            seeds: vec![700, 701, 702, 703],
        },
        hyperparams: HyperParams {
            n_views: 4,
            total_epochs: 300,
            warmup_epochs: 40,
            lr0: 0.01,
            fgsm_epsilon: 0.1,
            lambda_dif_max: 1.0,
            ..HyperParams::default()
        },
        run: RunConfig {
            out_dir: std::env::temp_dir().join(format!("cotrain-example-multiview-{tag}")),
            metrics_path: None,
            checkpoint_interval: 0,
            mode: RunMode::Dct,
            schedule,
            pretrain_epochs: 0,
            seed: 99,
            parallel_pairs: false,
        },
    }
}

fn main() {
    // How often does each unordered pair train together under the real
    // schedule? A uniform random matching of 4 views pairs any two with
    // probability 1/3.
    let mut state = TrainState::new(7);
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    let draws = 1000;
    for _ in 0..draws {
        for pair in state.draw_pairing(4).chunks(2) {
            *counts.entry((pair[0], pair[1])).or_insert(0) += 1;
        }
    }
    println!("pair frequencies over {draws} iterations (expected 1/3 each):");
    for i in 0..4 {
        for j in (i + 1)..4 {
            let f = *counts.get(&(i, j)).unwrap_or(&0) as f64 / draws as f64;
            println!("  views {{{i},{j}}}: {f:.3}");
        }
    }

    for (schedule, name) in [(ScheduleMode::Fake, "fake"), (ScheduleMode::Real, "real")] {
        println!("\n{name} schedule, 4 views ...");
        let summary = run_train(&config(schedule, name), &mut |rec| {
            if rec.epoch % 100 == 0 {
                println!(
                    "  epoch {:>3}  err {:.4}  agreement {:.3}",
                    rec.epoch, rec.mean_err, rec.agreement
                );
            }
        })
        .unwrap();
        let last = summary.rows.last().unwrap();
        println!(
            "  final: mean err {:.4}, per-view {:?}",
            last.mean_err,
            last.per_view_err
                .iter()
                .map(|e| format!("{e:.3}"))
                .collect::<Vec<_>>()
        );
    }
}

//! Generates FGSM examples against briefly trained views and prints the
//! cross-view transfer matrix: how often one view's adversarial examples
//! fool the other.
//!
//! ```bash
//! cargo run --release --example adversarial_transfer
//! ```

use cotrain::adversarial::fgsm;
use cotrain::data::{split, two_moons, SplitSpec};
use cotrain::metrics::{collapse_from_matrix, transfer_matrix};
use cotrain::model::{init_view, OptimizerState};
use cotrain::trainer::{pretrain, HyperParams};

fn main() {
    let data = two_moons(1500, 0.1, 5).unwrap();
    let s = split(
        &data,
        &SplitSpec {
            n_labeled: 200,
            seed: 2,
        },
    )
    .unwrap();

    // Two independently initialized views, each trained supervised-only on
    // its own data order.
    let mut views = vec![
        init_view(&[2, 32, 32, 2], 11).unwrap(),
        init_view(&[2, 32, 32, 2], 12).unwrap(),
    ];
    let hp = HyperParams {
        lr0: 0.02,
        batch_size: 50,
        ..HyperParams::default()
    };
    let mut opts: Vec<OptimizerState> = views
        .iter()
        .map(|v| OptimizerState::new(v, hp.momentum, hp.weight_decay))
        .collect();
    pretrain(&mut views, &mut opts, &s.labeled, 120, &hp, 9).unwrap();

    let probe = two_moons(256, 0.1, 77).unwrap();
    let eps = 0.1;

    // A perturbation is at most epsilon per coordinate and stays in range.
    let adv = fgsm(
        &views[0],
        &probe.features,
        &vec![None; 256],
        eps,
        probe.feature_range,
    )
    .unwrap();
    let max_delta = adv
        .x_adv
        .data()
        .iter()
        .zip(probe.features.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("max |x_adv - x| = {max_delta:.3} (epsilon = {eps})");

    let matrix = transfer_matrix(&views, &probe.features, eps, probe.feature_range).unwrap();
    println!("\ntransfer matrix (attacker row -> victim column):");
    for (i, row) in matrix.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("  view {i}: [{}]", cells.join(", "));
    }
    println!(
        "diagonal = self-attack success; mean off-diagonal (collapse score) = {:.3}",
        collapse_from_matrix(&matrix)
    );

    // Contrast: two bit-identical copies transfer at exactly the
    // self-attack rate. That is maximal collapse.
    let clones = vec![views[0].clone(), views[0].clone()];
    let clone_matrix = transfer_matrix(&clones, &probe.features, eps, probe.feature_range).unwrap();
    println!(
        "\ncollapse score of two identical copies: {:.3} (equals their self-attack rate {:.3})",
        collapse_from_matrix(&clone_matrix),
        clone_matrix[0][0]
    );
    println!(
        "supervised-only views trained on the same labels share most errors; the \
         view-difference loss exists to push this transfer down"
    );
}

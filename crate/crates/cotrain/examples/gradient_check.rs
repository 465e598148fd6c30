//! Checks the analytic gradients of every loss term against central
//! finite differences on a small random pair of views.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use cotrain::losses::{cot_loss_graph, dif_loss_graph, one_hot, sup_loss_graph, total_loss_graph};
use cotrain::model::{init_view, ViewModel};
use cotrain::tape::Tape;
use cotrain::tensor::Tensor;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const B_SUP: usize = 2;
const B_UNL: usize = 3;
const LAMBDA_COT: f64 = 10.0;
const LAMBDA_DIF: f64 = 0.5;

struct Setup {
    x_a: Tensor,
    x_b: Tensor,
    y_a: Vec<usize>,
    y_b: Vec<usize>,
    adv_a: Tensor,
    adv_b: Tensor,
    target_a: Tensor,
    target_b: Tensor,
}

fn make_setup(seed: u64, view_a: &ViewModel, view_b: &ViewModel) -> Setup {
    let mut rng = StdRng::seed_from_u64(seed);
    let rows = B_SUP + B_UNL;
    let dim = view_a.input_dim();
    let classes = view_a.num_classes();
    let mut batch = || {
        let data: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(0.0..1.0)).collect();
        Tensor::new(vec![rows, dim], data).unwrap()
    };
    let x_a = batch();
    let x_b = batch();
    let y_a: Vec<usize> = (0..B_SUP).map(|i| i % classes).collect();
    let y_b: Vec<usize> = (0..B_SUP).map(|i| (i + 1) % classes).collect();
    let labels = |y: &[usize]| {
        let mut l: Vec<Option<usize>> = y.iter().map(|&v| Some(v)).collect();
        l.extend(std::iter::repeat_n(None, B_UNL));
        l
    };
    // Adversarial inputs are constants with respect to the loss gradient,
    // so we generate them once up front.
    let adv_a = cotrain::adversarial::fgsm(view_a, &x_a, &labels(&y_a), 0.05, (0.0, 1.0))
        .unwrap()
        .x_adv;
    let adv_b = cotrain::adversarial::fgsm(view_b, &x_b, &labels(&y_b), 0.05, (0.0, 1.0))
        .unwrap()
        .x_adv;
    // The clean predictions act as detached targets in the difference
    // loss: no gradient flows into them, so freezing them at the base
    // parameters leaves the gradient unchanged while making the
    // finite-difference probe measure exactly the optimized function.
    let target_a = view_a.forward(&x_a).unwrap();
    let target_b = view_b.forward(&x_b).unwrap();
    Setup {
        x_a,
        x_b,
        y_a,
        y_b,
        adv_a,
        adv_b,
        target_a,
        target_b,
    }
}

/// Builds the full training objective on a tape and returns the four loss
/// node ids plus the forward handles of both views.
fn build(
    tape: &mut Tape,
    setup: &Setup,
    view_a: &ViewModel,
    view_b: &ViewModel,
) -> (
    [cotrain::tape::NodeId; 4],
    [cotrain::model::ForwardHandles; 4],
) {
    let classes = view_a.num_classes();
    let xa = tape.leaf(setup.x_a.clone());
    let ha = view_a.forward_on(tape, xa).unwrap();
    let xb = tape.leaf(setup.x_b.clone());
    let hb = view_b.forward_on(tape, xb).unwrap();
    let ga = tape.leaf(setup.adv_a.clone());
    let hb_on_ga = view_b.forward_on(tape, ga).unwrap();
    let gb = tape.leaf(setup.adv_b.clone());
    let ha_on_gb = view_a.forward_on(tape, gb).unwrap();

    let pa_s = tape.slice_rows(ha.probs, 0, B_SUP).unwrap();
    let pb_s = tape.slice_rows(hb.probs, 0, B_SUP).unwrap();
    let ya = tape.leaf(one_hot(&setup.y_a, classes).unwrap());
    let yb = tape.leaf(one_hot(&setup.y_b, classes).unwrap());
    let sup = sup_loss_graph(tape, ya, pa_s, yb, pb_s).unwrap();
    let pa_u = tape.slice_rows(ha.probs, B_SUP, B_UNL).unwrap();
    let pb_u = tape.slice_rows(hb.probs, B_SUP, B_UNL).unwrap();
    let cot = cot_loss_graph(tape, pa_u, pb_u).unwrap();
    let ta = tape.leaf(setup.target_a.clone());
    let tb = tape.leaf(setup.target_b.clone());
    let dif = dif_loss_graph(tape, ta, ha_on_gb.probs, tb, hb_on_ga.probs).unwrap();
    let total = total_loss_graph(tape, sup, cot, dif, LAMBDA_COT, LAMBDA_DIF).unwrap();
    ([sup, cot, dif, total], [ha, hb, hb_on_ga, ha_on_gb])
}

fn loss_value(which: usize, setup: &Setup, view_a: &ViewModel, view_b: &ViewModel) -> f64 {
    let mut tape = Tape::new();
    let (nodes, _) = build(&mut tape, setup, view_a, view_b);
    tape.scalar(nodes[which])
}

fn main() {
    let names = ["sup", "cot", "dif", "total"];
    println!("loss     max-rel-error   params-checked");
    for (which, name) in names.iter().enumerate() {
        let mut worst: f64 = 0.0;
        let mut checked = 0usize;
        for seed in 0..5u64 {
            let view_a = init_view(&[3, 6, 3], 2 * seed + 1).unwrap();
            let view_b = init_view(&[3, 6, 3], 2 * seed + 2).unwrap();
            let setup = make_setup(100 + seed, &view_a, &view_b);

            // Analytic gradients from one backward pass.
            let mut tape = Tape::new();
            let (nodes, handles) = build(&mut tape, &setup, &view_a, &view_b);
            tape.backward(nodes[which]).unwrap();
            let mut acc_a = view_a.clone();
            acc_a.accumulate_grads(&tape, &handles[0]).unwrap();
            acc_a.accumulate_grads(&tape, &handles[3]).unwrap();
            let mut acc_b = view_b.clone();
            acc_b.accumulate_grads(&tape, &handles[1]).unwrap();
            acc_b.accumulate_grads(&tape, &handles[2]).unwrap();
            let mut analytic = Vec::new();
            for view in [&acc_a, &acc_b] {
                for layer in view.layers() {
                    analytic.extend_from_slice(layer.weight.grad().unwrap());
                    analytic.extend_from_slice(layer.bias.grad().unwrap());
                }
            }

            // Central finite differences over every parameter.
            let h = 1e-5;
            let na = view_a.num_params();
            let base_a = view_a.flat_params();
            let base_b = view_b.flat_params();
            for (p, analytic_g) in analytic.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut va = view_a.clone();
                    let mut vb = view_b.clone();
                    let mut fa = base_a.clone();
                    let mut fb = base_b.clone();
                    if p < na {
                        fa[p] += delta;
                    } else {
                        fb[p - na] += delta;
                    }
                    va.load_flat_params(&fa).unwrap();
                    vb.load_flat_params(&fb).unwrap();
                    loss_value(which, &setup, &va, &vb)
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let rel =
                    (analytic_g - numeric).abs() / analytic_g.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
        println!("{name:<8} {worst:<15.3e} {checked}");
        assert!(worst < 1e-4, "gradient check failed for {name}");
    }
    println!("all gradients match finite differences");
}

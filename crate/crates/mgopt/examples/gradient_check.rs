//! Checks exact backpropagation against central finite differences on a few
//! small random networks.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use mgopt::network::{self, NetParams, NetSpec};
use mgopt::numerics::SeededRng;

fn finite_difference(
    spec: &NetSpec,
    theta: &[f64],
    inputs: &[f64],
    labels: &[usize],
    h: f64,
) -> Vec<f64> {
    let mut probe = theta.to_vec();
    let mut fd = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let up = network::batch_loss(spec, &probe, inputs, labels, 0.0);
        probe[i] = theta[i] - h;
        let down = network::batch_loss(spec, &probe, inputs, labels, 0.0);
        probe[i] = theta[i];
        fd[i] = (up - down) / (2.0 * h);
    }
    fd
}

fn main() {
    println!("backpropagation vs central finite differences (h = 1e-5)\n");
    println!(
        "{:>6} {:>6} {:>8} {:>14} {:>12}",
        "depth", "width", "params", "max rel err", "checked"
    );

    let mut worst: f64 = 0.0;
    for (seed, depth, width) in [(1u64, 1, 1), (2, 2, 3), (3, 4, 3), (4, 8, 2)] {
        let spec = NetSpec::new(5, width, 3, depth, 0.1);
        let mut rng = SeededRng::new(seed);
        let theta = NetParams::xavier(&spec, &mut rng).flatten();
        let mut data_rng = SeededRng::new(seed + 100);
        let inputs: Vec<f64> = (0..6 * spec.input_dim)
            .map(|_| data_rng.uniform_in(-1.0, 1.0))
            .collect();
        let labels: Vec<usize> = (0..6).map(|_| data_rng.below(spec.num_classes)).collect();

        let (_, grad) = network::loss_and_grad(&spec, &theta, &inputs, &labels, 0.0);
        let fd = finite_difference(&spec, &theta, &inputs, &labels, 1e-5);

        let mut max_rel: f64 = 0.0;
        let mut checked = 0usize;
        for i in 0..theta.len() {
            if grad[i].abs() > 1e-8 {
                max_rel = max_rel.max((grad[i] - fd[i]).abs() / grad[i].abs());
                checked += 1;
            }
        }
        worst = worst.max(max_rel);
        println!(
            "{:>6} {:>6} {:>8} {:>14.3e} {:>9}/{}",
            depth,
            width,
            theta.len(),
            max_rel,
            checked,
            theta.len()
        );
    }
    println!("\nworst relative error: {worst:.3e}");
}

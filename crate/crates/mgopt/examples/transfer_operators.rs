//! Builds a network hierarchy and demonstrates the restriction and
//! prolongation operators on parameter vectors.
//!
//! ```bash
//! cargo run --release --example transfer_operators
//! ```

use mgopt::hierarchy::Hierarchy;
use mgopt::numerics::{norm_inf, SeededRng};

fn main() {
    let fine_depth = 64;
    let num_levels = 4;
    let hierarchy = Hierarchy::build(
        fine_depth,
        num_levels,
        8,   // input dim
        10,  // width
        10,  // classes
        3.2, // horizon
        &[(1, 0), (1, 1), (1, 1), (1, 0)],
    )
    .expect("valid hierarchy");

    println!("hierarchy over horizon T = {}", hierarchy.horizon());
    println!(
        "{:>6} {:>7} {:>10} {:>10}",
        "level", "depth", "dt", "params"
    );
    for level in hierarchy.levels() {
        println!(
            "{:>6} {:>7} {:>10.5} {:>10}",
            level.level,
            level.depth,
            level.dt,
            hierarchy.param_len(level.level)
        );
    }

    // restriction then prolongation: coarse vectors are recovered exactly
    let mut rng = SeededRng::new(7);
    let finest = hierarchy.finest();
    let coarse: Vec<f64> = (0..hierarchy.param_len(finest - 1))
        .map(|_| rng.uniform_in(-1.0, 1.0))
        .collect();
    let up = hierarchy.prolong(finest, &coarse);
    let back = hierarchy.restrict(finest, &up);
    println!(
        "\nrestrict(prolong(x)) == x: {} (max abs diff {:.1e})",
        back == coarse,
        back.iter()
            .zip(&coarse)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max),
    );

    // prolongation preserves constant block fields and partitions unity
    let ones = vec![1.0; hierarchy.param_len(finest - 1)];
    let up_ones = hierarchy.prolong(finest, &ones);
    println!(
        "prolong(ones) == ones:     {} (operator rows sum to 1)",
        up_ones.iter().all(|&x| x == 1.0)
    );

    // transfers are linear
    let x: Vec<f64> = (0..coarse.len())
        .map(|_| rng.uniform_in(-1.0, 1.0))
        .collect();
    let y: Vec<f64> = (0..coarse.len())
        .map(|_| rng.uniform_in(-1.0, 1.0))
        .collect();
    let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
    let lhs = hierarchy.prolong(finest, &sum);
    let rhs: Vec<f64> = hierarchy
        .prolong(finest, &x)
        .iter()
        .zip(hierarchy.prolong(finest, &y).iter())
        .map(|(a, b)| a + b)
        .collect();
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    println!("prolong linearity residual: {:.1e}", norm_inf(&diff));
}

//! The cosine learning-rate schedule and the early-stopping rule on a few
//! scripted validation curves.

use emi_core::training::{cosine_lr, early_stop_check};

fn main() -> emi_core::Result<()> {
    for e in (0..30).step_by(3).chain([29]) {
        println!("epoch {e:>2}  lr {:.3e}", cosine_lr(e, 30, 1e-4)?);
    }

    let curves: [&[f64]; 3] = [
        &[0.10, 0.20, 0.19, 0.18, 0.17, 0.16, 0.15],
        &[0.10, 0.20, 0.20, 0.20, 0.20, 0.20, 0.20],
        &[0.10, 0.20, 0.19, 0.18, 0.21, 0.20, 0.19],
    ];
    for curve in curves {
        let stop = (1..=curve.len()).find(|&n| early_stop_check(&curve[..n], 5));
        match stop {
            Some(n) => println!("{curve:?}: stop after epoch {}", n - 1),
            None => println!("{curve:?}: keep going"),
        }
    }
    Ok(())
}

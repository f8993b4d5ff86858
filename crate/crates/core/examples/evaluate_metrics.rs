//! Pearson correlation per emotion and the six-way mean ρ_VAL, including a
//! degenerate (constant) column.

use emi_core::linalg::{Matrix, Rng};
use emi_core::metrics::{pearson, rho_val};

fn main() -> emi_core::Result<()> {
    println!("pearson([1,2,3,4], [2,4,5,4]) = {:.6}", pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 5.0, 4.0])?);
    println!("pearson([1,2,3,4], [2,3,5,4]) = {:.6}", pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 5.0, 4.0])?);

    let mut rng = Rng::new(3);
    let n = 50;
    let mut labels = Matrix::zeros(n, 6);
    let mut preds = Matrix::zeros(n, 6);
    for i in 0..n {
        for k in 0..6 {
            let y = rng.next_f64();
            labels.set(i, k, y);
            // noise grows with the emotion index
            let p = y + rng.uniform(-1.0, 1.0) * 0.2 * k as f64;
            preds.set(i, k, p.clamp(0.0, 1.0));
        }
    }
    println!("\n{}", rho_val(&preds, &labels)?);

    // a model that outputs a constant for one emotion
    for i in 0..n {
        preds.set(i, 2, 0.5);
    }
    let report = rho_val(&preds, &labels)?;
    println!("\n{report}");
    println!("any degenerate: {}", report.any_degenerate());
    Ok(())
}
